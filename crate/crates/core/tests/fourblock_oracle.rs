mod support;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use panelci_core::fourblock::*;
use support::*;

fn noisy_instance(seed: u64, n: usize, t: usize, r: usize, sigma: f64) -> DMatrix<f64> {
    let mut g = rng(seed);
    let (m, _, _) = low_rank(&mut g, n, t, r);
    m + gaussian(&mut g, n, t) * sigma
}

#[test]
fn estimate_matches_transcription() {
    let y = noisy_instance(1, 40, 30, 2, 0.1);
    let p = FourBlockProblem::from_full(&y, 20, 20).unwrap();
    let fit = four_block_estimate(&p, 2).unwrap();
    let reference = ref_four_block(&y, 20, 20, 2);
    assert_abs_diff_eq!(fit.m_hat_d, reference.m_hat_d, epsilon = 1e-8);
    assert_abs_diff_eq!(fit.m_hat_b, reference.m_hat_b, epsilon = 1e-8);
    assert_abs_diff_eq!(fit.left_reconstruction, reference.left_recon, epsilon = 1e-8);

    let res = estimate_residuals(&p, &fit).unwrap();
    assert_abs_diff_eq!(res.e_a, reference.e_a, epsilon = 1e-8);
    assert_abs_diff_eq!(res.e_b, reference.e_b, epsilon = 1e-8);
    assert_abs_diff_eq!(res.e_c, reference.e_c, epsilon = 1e-8);
}

#[test]
fn residual_identities_hold_exactly() {
    let y = noisy_instance(2, 15, 12, 2, 0.5);
    let p = FourBlockProblem::from_full(&y, 7, 6).unwrap();
    let fit = four_block_estimate(&p, 2).unwrap();
    let res = estimate_residuals(&p, &fit).unwrap();
    assert_eq!(res.e_b, p.y_b() - &fit.m_hat_b);
    assert_eq!(res.e_a, p.y_a() - fit.left_reconstruction.rows(0, 7));
    assert_eq!(res.e_c, p.y_c() - fit.left_reconstruction.rows(7, 8));
}

#[test]
fn variance_matches_literal_sum() {
    let y = noisy_instance(3, 24, 18, 2, 0.3);
    let p = FourBlockProblem::from_full(&y, 12, 9).unwrap();
    let fit = four_block_estimate(&p, 2).unwrap();
    let res = estimate_residuals(&p, &fit).unwrap();
    for i in 12..24 {
        for t in 9..18 {
            let got = cell_variance(&fit, &res, i, t).unwrap();
            let want = literal_gamma(&fit.u_hat, &fit.v_hat, &res.e_b, &res.e_c, 12, 9, i, t);
            assert!((got - want).abs() <= 1e-12 * want.max(1.0), "({i},{t}) {got} {want}");
        }
    }
}

#[test]
fn hand_sized_variance() {
    // U = (1,2,3), V = (1,1,2) with N1 = T1 = 2, r = 1
    let u = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
    let v = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 2.0]);
    let fit = FourBlockFit::from_parts(u.clone(), v.clone(), DMatrix::zeros(2, 1), DMatrix::zeros(3, 2), 2, 2)
        .unwrap();
    let res = ResidualMatrix {
        e_a: DMatrix::zeros(2, 2),
        e_b: DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
        e_c: DMatrix::from_row_slice(1, 2, &[3.0, -1.0]),
    };
    let got = cell_variance(&fit, &res, 2, 2).unwrap();
    // 1·(3/5)² + 4·(6/5)² + 9·1 + 1·1
    assert_abs_diff_eq!(got, 16.12, epsilon = 1e-12);
    let literal = literal_gamma(&u, &v, &res.e_b, &res.e_c, 2, 2, 2, 2);
    assert_abs_diff_eq!(got, literal, epsilon = 1e-12);
}

#[test]
fn bilinear_matches_quadruple_loop() {
    let y = noisy_instance(4, 20, 16, 2, 0.4);
    let p = FourBlockProblem::from_full(&y, 10, 8).unwrap();
    let fit = four_block_estimate(&p, 2).unwrap();
    let res = estimate_residuals(&p, &fit).unwrap();
    let mut g = rng(44);
    let weights = [
        (vec![1.0; 10], vec![1.0; 8]),
        ((0..10).map(|_| g.standard_normal()).collect(), (0..8).map(|_| g.standard_normal()).collect()),
    ];
    for (c1, c2) in &weights {
        let got = bilinear_variance(&fit, &res, c1, c2).unwrap();
        let want = literal_bilinear(&fit.u_hat, &fit.v_hat, &res.e_b, &res.e_c, 10, 8, c1, c2);
        assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn bilinear_point_column_mean() {
    let y = noisy_instance(5, 20, 16, 2, 0.4);
    let p = FourBlockProblem::from_full(&y, 10, 8).unwrap();
    let fit = four_block_estimate(&p, 2).unwrap();
    let c1 = vec![0.1; 10];
    for s in 0..8 {
        let mut c2 = vec![0.0; 8];
        c2[s] = 1.0;
        let mean: f64 = (0..10).map(|j| fit.m_hat_d[(j, s)]).sum::<f64>() / 10.0;
        assert_abs_diff_eq!(bilinear_point(&fit, &c1, &c2).unwrap(), mean, epsilon = 1e-12);
    }
    assert_eq!(bilinear_point(&fit, &[0.0; 10], &[1.0; 8]).unwrap(), 0.0);
}

#[test]
fn oracle_variance_matches_monte_carlo() {
    let (n, t, n1, t1, r) = (12, 10, 6, 5, 2);
    let mut g = rng(6);
    let u = gaussian(&mut g, n, r);
    let v = gaussian(&mut g, t, r);
    let sigma = DMatrix::from_fn(n, t, |i, j| 0.5 + 0.1 * ((i + 2 * j) % 7) as f64);

    let u1 = u.rows(0, n1).into_owned();
    let v1 = v.rows(0, t1).into_owned();
    let pu = u.rows(n1, n - n1) * gj_inverse(&(u1.transpose() * &u1)) * u1.transpose();
    let pv = v.rows(t1, t - t1) * gj_inverse(&(v1.transpose() * &v1)) * v1.transpose();

    for &(j, s) in &[(0usize, 0usize), (3, 2), (5, 4)] {
        let (i, tt) = (n1 + j, t1 + s);
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            // Z = P_U E_b + E_c P_Vᵀ at cell (j, s)
            let mut z = 0.0;
            for k in 0..n1 {
                z += pu[(j, k)] * sigma[(k, tt)] * g.standard_normal();
            }
            for q in 0..t1 {
                z += sigma[(i, q)] * g.standard_normal() * pv[(s, q)];
            }
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        let oracle = oracle_cell_variance(&u, &v, &sigma, n1, t1, i, tt).unwrap();
        assert!((var - oracle).abs() / oracle < 0.03, "cell ({i},{tt}): mc {var} vs {oracle}");
    }
}

#[test]
fn oracle_is_basis_invariant() {
    let mut g = rng(7);
    let u = gaussian(&mut g, 10, 2);
    let v = gaussian(&mut g, 9, 2);
    let sigma = DMatrix::from_element(10, 9, 0.7);
    let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -0.5, 3.0]);
    for i in 5..10 {
        for t in 4..9 {
            let a = oracle_cell_variance(&u, &v, &sigma, 5, 4, i, t).unwrap();
            let b = oracle_cell_variance(&(&u * &q), &(&v * &q), &sigma, 5, 4, i, t).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
