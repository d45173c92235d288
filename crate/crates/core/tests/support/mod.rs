//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's linear algebra: SVDs come from a
//! one-sided Jacobi iteration and inverses from Gauss-Jordan elimination.
#![allow(dead_code)]

use nalgebra::DMatrix;
use panelci_core::synth::{SimRng, Stream};

/// Thin SVD `a = U diag(s) Vᵀ` by one-sided Jacobi rotations, sorted descending.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    if a.nrows() < a.ncols() {
        let (u, s, v) = jacobi_svd(&a.transpose());
        return (v, s, u);
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += w[(i, p)] * w[(i, p)];
                    beta += w[(i, q)] * w[(i, q)];
                    gamma += w[(i, p)] * w[(i, q)];
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * x - s * y;
                    w[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        s.push(norms[src]);
        for i in 0..m {
            u[(i, dst)] = if norms[src] > 0.0 { w[(i, src)] / norms[src] } else { 0.0 };
        }
        for i in 0..n {
            vs[(i, dst)] = v[(i, src)];
        }
    }
    (u, s, vs)
}

/// Rank-`r` truncation of the Jacobi SVD.
pub fn jacobi_truncated(a: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (u, s, v) = jacobi_svd(a);
    (u.columns(0, r).into_owned(), s[..r].to_vec(), v.columns(0, r).into_owned())
}

pub fn reconstruct(u: &DMatrix<f64>, s: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(u.nrows(), v.nrows());
    for i in 0..u.nrows() {
        for j in 0..v.nrows() {
            let mut x = 0.0;
            for k in 0..s.len() {
                x += u[(i, k)] * s[k] * v[(j, k)];
            }
            out[(i, j)] = x;
        }
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gj_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        m.swap_rows(col, piv);
        inv.swap_rows(col, piv);
        let d = m[(col, col)];
        assert!(d != 0.0, "singular matrix");
        for j in 0..n {
            m[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[(i, col)];
                for j in 0..n {
                    m[(i, j)] -= f * m[(col, j)];
                    inv[(i, j)] -= f * inv[(col, j)];
                }
            }
        }
    }
    inv
}

/// Step-by-step transcription of the four-block estimator.
pub struct RefFit {
    pub m_hat_d: DMatrix<f64>,
    pub m_hat_b: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub left_recon: DMatrix<f64>,
    pub e_a: DMatrix<f64>,
    pub e_b: DMatrix<f64>,
    pub e_c: DMatrix<f64>,
    pub n1: usize,
    pub t1: usize,
}

pub fn ref_four_block(y: &DMatrix<f64>, n1: usize, t1: usize, r: usize) -> RefFit {
    let (n, t) = y.shape();
    let left = y.columns(0, t1).into_owned();
    let upper = y.rows(0, n1).into_owned();

    let (ul, sl, vl) = jacobi_truncated(&left, r);
    let left_recon = reconstruct(&ul, &sl, &vl);
    let (uu, su, vu) = jacobi_truncated(&upper, r);
    let upper_recon = reconstruct(&uu, &su, &vu);
    let m_hat_b = upper_recon.columns(t1, t - t1).into_owned();

    let u1 = ul.rows(0, n1).into_owned();
    let u2 = ul.rows(n1, n - n1).into_owned();
    let g_inv = gj_inverse(&(u1.transpose() * &u1));
    let m_hat_d = &u2 * g_inv * u1.transpose() * &m_hat_b;

    let e_a = y.view((0, 0), (n1, t1)) - left_recon.rows(0, n1);
    let e_c = y.view((n1, 0), (n - n1, t1)) - left_recon.rows(n1, n - n1);
    let e_b = y.view((0, t1), (n1, t - t1)) - &m_hat_b;

    RefFit {
        m_hat_d,
        m_hat_b,
        u: ul,
        v: vu,
        left_recon,
        e_a,
        e_b,
        e_c,
        n1,
        t1,
    }
}

/// `x G⁻¹ yᵀ` for row vectors of `m`, written out.
fn weighted_inner(m: &DMatrix<f64>, g_inv: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let r = m.ncols();
    let mut total = 0.0;
    for p in 0..r {
        for q in 0..r {
            total += m[(a, p)] * g_inv[(p, q)] * m[(b, q)];
        }
    }
    total
}

/// Literal double sum for `γ̂_{i,t}` at global 0-based `(i, t)`.
pub fn literal_gamma(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    e_b: &DMatrix<f64>,
    e_c: &DMatrix<f64>,
    n1: usize,
    t1: usize,
    i: usize,
    t: usize,
) -> f64 {
    let u1 = u.rows(0, n1).into_owned();
    let v1 = v.rows(0, t1).into_owned();
    let gu = gj_inverse(&(u1.transpose() * &u1));
    let gv = gj_inverse(&(v1.transpose() * &v1));
    let mut total = 0.0;
    for k in 0..n1 {
        let w = weighted_inner(u, &gu, i, k);
        total += e_b[(k, t - t1)].powi(2) * w * w;
    }
    for s in 0..t1 {
        let w = weighted_inner(v, &gv, t, s);
        total += e_c[(i - n1, s)].powi(2) * w * w;
    }
    total
}

/// Literal evaluation of the bilinear variance estimate by nested loops.
pub fn literal_bilinear(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    e_b: &DMatrix<f64>,
    e_c: &DMatrix<f64>,
    n1: usize,
    t1: usize,
    c1: &[f64],
    c2: &[f64],
) -> f64 {
    let n2 = c1.len();
    let t2 = c2.len();
    let u1 = u.rows(0, n1).into_owned();
    let v1 = v.rows(0, t1).into_owned();
    let gu = gj_inverse(&(u1.transpose() * &u1));
    let gv = gj_inverse(&(v1.transpose() * &v1));
    let mut total = 0.0;
    // [U1 G⁻¹ U2ᵀ c1 c2ᵀ]_{i,t}
    for i in 0..n1 {
        for t in 0..t2 {
            let mut a = 0.0;
            for j in 0..n2 {
                a += weighted_inner(u, &gu, i, n1 + j) * c1[j] * c2[t];
            }
            total += e_b[(i, t)].powi(2) * a * a;
        }
    }
    // [c1 c2ᵀ V2 H⁻¹ V1ᵀ]_{i,t}
    for i in 0..n2 {
        for t in 0..t1 {
            let mut b = 0.0;
            for s in 0..t2 {
                b += c1[i] * c2[s] * weighted_inner(v, &gv, t1 + s, t);
            }
            total += e_c[(i, t)].powi(2) * b * b;
        }
    }
    total
}

pub fn rng(seed: u64) -> SimRng {
    SimRng::new(seed, Stream::Generate, 900)
}

pub fn gaussian(rng: &mut SimRng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.standard_normal())
}

/// Random exact rank-`r` matrix `A Bᵀ` plus its factors.
pub fn low_rank(rng: &mut SimRng, n: usize, t: usize, r: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = gaussian(rng, n, r);
    let b = gaussian(rng, t, r);
    (&a * b.transpose(), a, b)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Random staggered design with `k` groups whose smallest sub-problem still
/// admits rank `r`, rows in shuffled order. Returns `(schedule, n, t)`.
pub fn random_staggered(rng: &mut SimRng, k: usize, r: usize) -> (Vec<Option<usize>>, usize, usize) {
    let t = r + k - 1 + rng.int_inclusive(2, 12);
    // k - 1 distinct adoption columns in [r, t)
    let mut cols: Vec<usize> = (r..t).collect();
    for i in 0..cols.len() {
        let j = rng.int_inclusive(i, cols.len() - 1);
        cols.swap(i, j);
    }
    let mut boundaries = cols[..k - 1].to_vec();
    boundaries.sort_unstable();

    let mut schedule: Vec<Option<usize>> = vec![None; r + rng.int_inclusive(1, 4)];
    for &b in &boundaries {
        for _ in 0..rng.int_inclusive(1, 3) {
            schedule.push(Some(b));
        }
    }
    for i in 0..schedule.len() {
        let j = rng.int_inclusive(i, schedule.len() - 1);
        schedule.swap(i, j);
    }
    let n = schedule.len();
    (schedule, n, t)
}

/// Random permutation of `0..n`.
pub fn permutation(rng: &mut SimRng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let j = rng.int_inclusive(i, n - 1);
        p.swap(i, j);
    }
    p
}
