//! Estimation and inference for the four-block design.
//!
//! The panel is split as
//!
//! ```text
//!        T1     T2
//!   N1 [ Y_a   Y_b ]
//!   N2 [ Y_c    ?  ]
//! ```
//!
//! where the first `N1` units are controls throughout and the remaining `N2`
//! units are treated from column `T1` on. The bottom-right block of the
//! counterfactual mean is imputed from the subspace of the left block
//! `[Y_a; Y_c]` and a denoised estimate of `Y_b` from the upper block
//! `[Y_a Y_b]`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lowrank::{check_finite, truncated_svd};
use crate::normal;
use crate::par;

/// Largest condition number accepted for `Û₁ᵀÛ₁` and `V̂₁ᵀV̂₁`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// The three observed blocks of a four-block design.
#[derive(Debug, Clone, PartialEq)]
pub struct FourBlockProblem {
    y_a: DMatrix<f64>,
    y_b: DMatrix<f64>,
    y_c: DMatrix<f64>,
}

impl FourBlockProblem {
    pub fn new(y_a: DMatrix<f64>, y_b: DMatrix<f64>, y_c: DMatrix<f64>) -> Result<Self> {
        let (n1, t1) = y_a.shape();
        if n1 == 0 || t1 == 0 {
            return Err(Error::Dimension("block a must be non-empty".into()));
        }
        if y_b.nrows() != n1 || y_b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "block b is {}x{}, expected {n1} rows and at least one column",
                y_b.nrows(),
                y_b.ncols()
            )));
        }
        if y_c.ncols() != t1 || y_c.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "block c is {}x{}, expected {t1} columns and at least one row",
                y_c.nrows(),
                y_c.ncols()
            )));
        }
        check_finite(&y_a, "block a")?;
        check_finite(&y_b, "block b")?;
        check_finite(&y_c, "block c")?;
        Ok(Self { y_a, y_b, y_c })
    }

    /// Splits a full `N×T` matrix; the bottom-right block is ignored.
    pub fn from_full(y: &DMatrix<f64>, n1: usize, t1: usize) -> Result<Self> {
        let (n, t) = y.shape();
        if n1 == 0 || t1 == 0 || n1 >= n || t1 >= t {
            return Err(Error::Dimension(format!(
                "split ({n1}, {t1}) invalid for a {n}x{t} panel"
            )));
        }
        Self::new(
            y.view((0, 0), (n1, t1)).into_owned(),
            y.view((0, t1), (n1, t - t1)).into_owned(),
            y.view((n1, 0), (n - n1, t1)).into_owned(),
        )
    }

    pub fn y_a(&self) -> &DMatrix<f64> {
        &self.y_a
    }
    pub fn y_b(&self) -> &DMatrix<f64> {
        &self.y_b
    }
    pub fn y_c(&self) -> &DMatrix<f64> {
        &self.y_c
    }
    pub fn n1(&self) -> usize {
        self.y_a.nrows()
    }
    pub fn t1(&self) -> usize {
        self.y_a.ncols()
    }
    pub fn n2(&self) -> usize {
        self.y_c.nrows()
    }
    pub fn t2(&self) -> usize {
        self.y_b.ncols()
    }
    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }
    pub fn t(&self) -> usize {
        self.t1() + self.t2()
    }

    /// `[Y_a; Y_c]`, N×T1.
    pub fn left(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n(), self.t1());
        m.view_mut((0, 0), self.y_a.shape()).copy_from(&self.y_a);
        m.view_mut((self.n1(), 0), self.y_c.shape())
            .copy_from(&self.y_c);
        m
    }

    /// `[Y_a Y_b]`, N1×T.
    pub fn upper(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n1(), self.t());
        m.view_mut((0, 0), self.y_a.shape()).copy_from(&self.y_a);
        m.view_mut((0, self.t1()), self.y_b.shape())
            .copy_from(&self.y_b);
        m
    }

    /// Multiplies every observed entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            y_a: &self.y_a * c,
            y_b: &self.y_b * c,
            y_c: &self.y_c * c,
        }
    }
}

/// Output of [`four_block_estimate`].
#[derive(Debug, Clone)]
pub struct FourBlockFit {
    /// Imputed counterfactual block, N2×T2.
    pub m_hat_d: DMatrix<f64>,
    /// Denoised block b, N1×T2.
    pub m_hat_b: DMatrix<f64>,
    /// Left singular vectors of `[Y_a; Y_c]`, N×r.
    pub u_hat: DMatrix<f64>,
    /// Right singular vectors of `[Y_a Y_b]`, T×r.
    pub v_hat: DMatrix<f64>,
    /// Rank-r reconstruction of `[Y_a; Y_c]`, N×T1.
    pub left_reconstruction: DMatrix<f64>,
    /// Top-r singular values of the left and upper blocks.
    pub left_singular_values: DVector<f64>,
    pub upper_singular_values: DVector<f64>,
    n1: usize,
    t1: usize,
    // Û₂(Û₁ᵀÛ₁)⁻¹Û₁ᵀ, N2×N1
    proj_u: DMatrix<f64>,
    // V̂₂(V̂₁ᵀV̂₁)⁻¹V̂₁ᵀ, T2×T1
    proj_v: DMatrix<f64>,
    gram_condition: (f64, f64),
}

/// Inverts a small SPD Gram matrix, refusing ill-conditioned ones.
fn gram_inverse(g: &DMatrix<f64>, which: &'static str) -> Result<DMatrix<f64>> {
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::Conditioning {
            which,
            context: "four-block problem".into(),
            condition,
            limit: MAX_GRAM_CONDITION,
        });
    }
    let chol = g.clone().cholesky().ok_or(Error::Conditioning {
        which,
        context: "four-block problem".into(),
        condition,
        limit: MAX_GRAM_CONDITION,
    })?;
    Ok(chol.inverse())
}

fn condition_number(g: &DMatrix<f64>) -> f64 {
    let eig = g.clone().symmetric_eigen();
    eig.eigenvalues.max() / eig.eigenvalues.min()
}

impl FourBlockFit {
    /// Assembles a fit from subspace estimates and a denoised block b.
    ///
    /// `u_hat` is N×r, `v_hat` is T×r, `m_hat_b` is N1×T2 and
    /// `left_reconstruction` is N×T1. Computes `M̂_d` and the projection
    /// rows used by the variance estimates.
    pub fn from_parts(
        u_hat: DMatrix<f64>,
        v_hat: DMatrix<f64>,
        m_hat_b: DMatrix<f64>,
        left_reconstruction: DMatrix<f64>,
        n1: usize,
        t1: usize,
    ) -> Result<Self> {
        let (n, r) = u_hat.shape();
        let t = v_hat.nrows();
        if v_hat.ncols() != r || r == 0 {
            return Err(Error::Dimension(format!(
                "u_hat has {r} columns but v_hat has {}",
                v_hat.ncols()
            )));
        }
        if n1 == 0 || t1 == 0 || n1 >= n || t1 >= t {
            return Err(Error::Dimension(format!(
                "split ({n1}, {t1}) invalid for a {n}x{t} design"
            )));
        }
        if r > n1.min(t1) {
            return Err(Error::RankInfeasible {
                rank: r,
                n1,
                t1,
                context: "four-block problem".into(),
            });
        }
        if m_hat_b.shape() != (n1, t - t1) {
            return Err(Error::Dimension(format!(
                "m_hat_b is {:?}, expected {:?}",
                m_hat_b.shape(),
                (n1, t - t1)
            )));
        }
        if left_reconstruction.shape() != (n, t1) {
            return Err(Error::Dimension(format!(
                "left reconstruction is {:?}, expected {:?}",
                left_reconstruction.shape(),
                (n, t1)
            )));
        }

        let u1 = u_hat.rows(0, n1);
        let u2 = u_hat.rows(n1, n - n1);
        let v1 = v_hat.rows(0, t1);
        let v2 = v_hat.rows(t1, t - t1);

        let gu = u1.transpose() * u1;
        let gv = v1.transpose() * v1;
        let gu_inv = gram_inverse(&gu, "U1'U1")?;
        let gv_inv = gram_inverse(&gv, "V1'V1")?;

        let m_hat_d = &u2 * (&gu_inv * (u1.transpose() * &m_hat_b));
        let proj_u = &u2 * &gu_inv * u1.transpose();
        let proj_v = &v2 * &gv_inv * v1.transpose();

        Ok(Self {
            m_hat_d,
            m_hat_b,
            left_singular_values: DVector::zeros(0),
            upper_singular_values: DVector::zeros(0),
            gram_condition: (condition_number(&gu), condition_number(&gv)),
            u_hat,
            v_hat,
            left_reconstruction,
            n1,
            t1,
            proj_u,
            proj_v,
        })
    }

    pub fn rank(&self) -> usize {
        self.u_hat.ncols()
    }
    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn t1(&self) -> usize {
        self.t1
    }
    pub fn n2(&self) -> usize {
        self.u_hat.nrows() - self.n1
    }
    pub fn t2(&self) -> usize {
        self.v_hat.nrows() - self.t1
    }
    pub fn n(&self) -> usize {
        self.u_hat.nrows()
    }
    pub fn t(&self) -> usize {
        self.v_hat.nrows()
    }

    /// `Û₂(Û₁ᵀÛ₁)⁻¹Û₁ᵀ`: row `i` holds the weights of control rows in treated row `i`.
    pub fn unit_projection(&self) -> &DMatrix<f64> {
        &self.proj_u
    }

    /// `V̂₂(V̂₁ᵀV̂₁)⁻¹V̂₁ᵀ`: row `t` holds the weights of pre-periods in post-period `t`.
    pub fn time_projection(&self) -> &DMatrix<f64> {
        &self.proj_v
    }

    /// Condition numbers of `Û₁ᵀÛ₁` and `V̂₁ᵀV̂₁`.
    pub fn gram_conditions(&self) -> (f64, f64) {
        self.gram_condition
    }
}

/// Imputes the unobserved block of a four-block design at rank `r`.
pub fn four_block_estimate(p: &FourBlockProblem, r: usize) -> Result<FourBlockFit> {
    if r == 0 || r > p.n1().min(p.t1()) {
        return Err(Error::RankInfeasible {
            rank: r,
            n1: p.n1(),
            t1: p.t1(),
            context: "four-block problem".into(),
        });
    }

    // Subspace estimation from the left block.
    let left = truncated_svd(&p.left(), r)?;
    let left_reconstruction = left.reconstruct();

    // Denoising of block b from the upper block.
    let upper = truncated_svd(&p.upper(), r)?;
    let v2 = upper.v.rows(p.t1(), p.t2());
    let mut us = upper.u.clone();
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col *= upper.s[j];
    }
    let m_hat_b = us * v2.transpose();

    let mut fit = FourBlockFit::from_parts(
        left.u,
        upper.v,
        m_hat_b,
        left_reconstruction,
        p.n1(),
        p.t1(),
    )?;
    fit.left_singular_values = left.s;
    fit.upper_singular_values = upper.s;
    Ok(fit)
}

/// Residuals on the observed blocks.
///
/// Blocks a and c are measured against the rank-r reconstruction of the
/// left block, block b against `M̂_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    pub e_a: DMatrix<f64>,
    pub e_b: DMatrix<f64>,
    pub e_c: DMatrix<f64>,
}

pub fn estimate_residuals(p: &FourBlockProblem, fit: &FourBlockFit) -> Result<ResidualMatrix> {
    if p.n1() != fit.n1() || p.t1() != fit.t1() || p.n2() != fit.n2() || p.t2() != fit.t2() {
        return Err(Error::Input(format!(
            "problem dims ({}, {}, {}, {}) do not match fit dims ({}, {}, {}, {})",
            p.n1(),
            p.t1(),
            p.n2(),
            p.t2(),
            fit.n1(),
            fit.t1(),
            fit.n2(),
            fit.t2()
        )));
    }
    let recon = &fit.left_reconstruction;
    Ok(ResidualMatrix {
        e_a: p.y_a() - recon.rows(0, p.n1()),
        e_b: p.y_b() - &fit.m_hat_b,
        e_c: p.y_c() - recon.rows(p.n1(), p.n2()),
    })
}

fn check_residual_dims(fit: &FourBlockFit, res: &ResidualMatrix) -> Result<()> {
    if res.e_b.shape() != (fit.n1(), fit.t2()) || res.e_c.shape() != (fit.n2(), fit.t1()) {
        return Err(Error::Input(format!(
            "residual blocks b {:?} / c {:?} do not match fit",
            res.e_b.shape(),
            res.e_c.shape()
        )));
    }
    Ok(())
}

/// Variance estimate `γ̂_{i,t}` for an unobserved cell.
///
/// `i` and `t` are 0-based indices into the full N×T design, so the cell
/// must satisfy `i >= N1` and `t >= T1`.
pub fn cell_variance(fit: &FourBlockFit, res: &ResidualMatrix, i: usize, t: usize) -> Result<f64> {
    check_residual_dims(fit, res)?;
    if i < fit.n1() || i >= fit.n() || t < fit.t1() || t >= fit.t() {
        return Err(Error::Domain(format!(
            "cell ({i}, {t}) is not in the unobserved block [{}, {}) x [{}, {})",
            fit.n1(),
            fit.n(),
            fit.t1(),
            fit.t()
        )));
    }
    Ok(local_cell_variance(fit, res, i - fit.n1(), t - fit.t1()))
}

/// `γ̂` at local block-d coordinates `(j, s)`.
fn local_cell_variance(fit: &FourBlockFit, res: &ResidualMatrix, j: usize, s: usize) -> f64 {
    let pu = fit.proj_u.row(j);
    let pv = fit.proj_v.row(s);
    let eb = res.e_b.column(s);
    let ec = res.e_c.row(j);

    let mut unit_term = 0.0;
    for k in 0..fit.n1() {
        let w = pu[k];
        unit_term += eb[k] * eb[k] * w * w;
    }
    let mut time_term = 0.0;
    for q in 0..fit.t1() {
        let w = pv[q];
        time_term += ec[q] * ec[q] * w * w;
    }
    unit_term + time_term
}

/// `γ̂` for every cell of block d, N2×T2.
pub fn variance_matrix(fit: &FourBlockFit, res: &ResidualMatrix) -> Result<DMatrix<f64>> {
    check_residual_dims(fit, res)?;
    let (n2, t2) = (fit.n2(), fit.t2());
    let rows = par::map_indices(n2, |j| {
        (0..t2)
            .map(|s| local_cell_variance(fit, res, j, s))
            .collect::<Vec<_>>()
    });
    Ok(DMatrix::from_fn(n2, t2, |j, s| rows[j][s]))
}

/// Point estimate, variance and two-sided normal interval for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellInference {
    pub point: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

impl CellInference {
    pub fn se(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Interval for `y − θ` given this interval for `θ`.
    pub fn reflect(&self, y: f64) -> Self {
        Self {
            point: y - self.point,
            variance: self.variance,
            lower: y - self.upper,
            upper: y - self.lower,
            alpha: self.alpha,
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `[point ± Φ⁻¹(1 − α/2)·√variance]`.
pub fn cell_ci(point: f64, variance: f64, alpha: f64) -> Result<CellInference> {
    check_alpha(alpha)?;
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::Input(format!(
            "variance must be finite and nonnegative, got {variance}"
        )));
    }
    if !point.is_finite() {
        return Err(Error::Input(format!("point estimate {point} is not finite")));
    }
    let half = normal::two_sided_critical(alpha) * variance.sqrt();
    Ok(CellInference {
        point,
        variance,
        lower: point - half,
        upper: point + half,
        alpha,
    })
}

fn check_weights(fit: &FourBlockFit, c1: &[f64], c2: &[f64]) -> Result<()> {
    if c1.len() != fit.n2() || c2.len() != fit.t2() {
        return Err(Error::Input(format!(
            "weight vectors have lengths ({}, {}), expected ({}, {})",
            c1.len(),
            c2.len(),
            fit.n2(),
            fit.t2()
        )));
    }
    if c1.iter().chain(c2).any(|x| !x.is_finite()) {
        return Err(Error::Input("weight vectors must be finite".into()));
    }
    Ok(())
}

/// `c₁ᵀ M̂_d c₂`.
pub fn bilinear_point(fit: &FourBlockFit, c1: &[f64], c2: &[f64]) -> Result<f64> {
    check_weights(fit, c1, c2)?;
    let mut total = 0.0;
    for (j, &a) in c1.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let row: f64 = c2
            .iter()
            .enumerate()
            .map(|(s, &b)| fit.m_hat_d[(j, s)] * b)
            .sum();
        total += a * row;
    }
    Ok(total)
}

/// Variance estimate `γ̂(c₁, c₂)` of `c₁ᵀ M̂_d c₂`.
///
/// The unit term weights `Ê_b²` by `[Û₁(Û₁ᵀÛ₁)⁻¹Û₂ᵀc₁c₂ᵀ]²` and the time term
/// weights `Ê_c²` by `[c₁c₂ᵀV̂₂(V̂₁ᵀV̂₁)⁻¹V̂₁ᵀ]²`. Both weight matrices are rank
/// one, which is what the factorized sums below exploit.
pub fn bilinear_variance(
    fit: &FourBlockFit,
    res: &ResidualMatrix,
    c1: &[f64],
    c2: &[f64],
) -> Result<f64> {
    check_weights(fit, c1, c2)?;
    check_residual_dims(fit, res)?;

    let c1v = DVector::from_column_slice(c1);
    let c2v = DVector::from_column_slice(c2);
    let a = fit.proj_u.tr_mul(&c1v); // N1
    let b = fit.proj_v.tr_mul(&c2v); // T1

    let mut unit_term = 0.0;
    for s in 0..fit.t2() {
        let w2 = c2[s] * c2[s];
        if w2 == 0.0 {
            continue;
        }
        for k in 0..fit.n1() {
            let e = res.e_b[(k, s)];
            unit_term += e * e * a[k] * a[k] * w2;
        }
    }
    let mut time_term = 0.0;
    for j in 0..fit.n2() {
        let w1 = c1[j] * c1[j];
        if w1 == 0.0 {
            continue;
        }
        for q in 0..fit.t1() {
            let e = res.e_c[(j, q)];
            time_term += e * e * w1 * b[q] * b[q];
        }
    }
    Ok(unit_term + time_term)
}

/// Runs estimation, residuals and per-cell intervals for every cell of block d.
#[derive(Debug, Clone)]
pub struct FourBlockInference {
    pub fit: FourBlockFit,
    pub residuals: ResidualMatrix,
    /// `γ̂` for block d, N2×T2.
    pub variances: DMatrix<f64>,
    pub alpha: f64,
}

impl FourBlockInference {
    /// Interval for block-d cell `(j, s)` in local coordinates.
    pub fn cell(&self, j: usize, s: usize) -> CellInference {
        let half = normal::two_sided_critical(self.alpha) * self.variances[(j, s)].sqrt();
        let point = self.fit.m_hat_d[(j, s)];
        CellInference {
            point,
            variance: self.variances[(j, s)],
            lower: point - half,
            upper: point + half,
            alpha: self.alpha,
        }
    }

    /// Interval for `c₁ᵀ M★_d c₂`.
    pub fn bilinear(&self, c1: &[f64], c2: &[f64]) -> Result<CellInference> {
        let point = bilinear_point(&self.fit, c1, c2)?;
        let var = bilinear_variance(&self.fit, &self.residuals, c1, c2)?;
        cell_ci(point, var, self.alpha)
    }
}

pub fn four_block_conf(p: &FourBlockProblem, r: usize, alpha: f64) -> Result<FourBlockInference> {
    check_alpha(alpha)?;
    let fit = four_block_estimate(p, r)?;
    let residuals = estimate_residuals(p, &fit)?;
    let variances = variance_matrix(&fit, &residuals)?;
    Ok(FourBlockInference {
        fit,
        residuals,
        variances,
        alpha,
    })
}

/// Plug-in inverse signal-to-noise diagnostic.
///
/// `σ̂_max / σ̂_r · √(NT / min(N1, T1))`, where `σ̂_max` is the largest per-unit
/// residual RMS over the observed cells and `σ̂_r` the smaller of the r-th
/// singular values of the left and upper blocks. Advisory only.
pub fn isnr(fit: &FourBlockFit, res: &ResidualMatrix) -> f64 {
    let mut sigma_max: f64 = 0.0;
    for k in 0..fit.n1() {
        let ss: f64 = res.e_a.row(k).iter().chain(res.e_b.row(k).iter()).map(|e| e * e).sum();
        sigma_max = sigma_max.max((ss / fit.t() as f64).sqrt());
    }
    for j in 0..fit.n2() {
        let ss: f64 = res.e_c.row(j).iter().map(|e| e * e).sum();
        sigma_max = sigma_max.max((ss / fit.t1() as f64).sqrt());
    }
    let r = fit.rank();
    let gamma_r = match (
        fit.left_singular_values.get(r - 1),
        fit.upper_singular_values.get(r - 1),
    ) {
        (Some(a), Some(b)) => a.min(*b),
        _ => return f64::NAN,
    };
    let scale = (fit.n() as f64 * fit.t() as f64 / fit.n1().min(fit.t1()) as f64).sqrt();
    sigma_max / gamma_r * scale
}

/// True-variance `γ★_{i,t}` from ground-truth factors and noise levels.
///
/// `u_star` is N×r, `v_star` is T×r and `sigma` holds the noise standard
/// deviation of every cell (N×T). `(i, t)` is 0-based in the full design.
pub fn oracle_cell_variance(
    u_star: &DMatrix<f64>,
    v_star: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    n1: usize,
    t1: usize,
    i: usize,
    t: usize,
) -> Result<f64> {
    let oracle = OracleVariance::new(u_star, v_star, n1, t1)?;
    if sigma.shape() != (u_star.nrows(), v_star.nrows()) {
        return Err(Error::Dimension(format!(
            "sigma is {:?}, expected {:?}",
            sigma.shape(),
            (u_star.nrows(), v_star.nrows())
        )));
    }
    if i < n1 || i >= u_star.nrows() || t < t1 || t >= v_star.nrows() {
        return Err(Error::Domain(format!(
            "cell ({i}, {t}) is not in the unobserved block"
        )));
    }
    Ok(oracle.cell(sigma, i - n1, t - t1))
}

/// Precomputed ground-truth projections for evaluating `γ★` over many cells.
#[derive(Debug, Clone)]
pub struct OracleVariance {
    n1: usize,
    t1: usize,
    proj_u: DMatrix<f64>,
    proj_v: DMatrix<f64>,
}

impl OracleVariance {
    pub fn new(u_star: &DMatrix<f64>, v_star: &DMatrix<f64>, n1: usize, t1: usize) -> Result<Self> {
        let (n, r) = u_star.shape();
        let t = v_star.nrows();
        if v_star.ncols() != r || n1 == 0 || t1 == 0 || n1 >= n || t1 >= t || r > n1.min(t1) {
            return Err(Error::Dimension(format!(
                "factors {n}x{r} / {t}x{} incompatible with split ({n1}, {t1})",
                v_star.ncols()
            )));
        }
        let u1 = u_star.rows(0, n1);
        let v1 = v_star.rows(0, t1);
        let gu_inv = gram_inverse(&(u1.transpose() * u1), "U1*'U1*")?;
        let gv_inv = gram_inverse(&(v1.transpose() * v1), "V1*'V1*")?;
        Ok(Self {
            n1,
            t1,
            proj_u: u_star.rows(n1, n - n1) * gu_inv * u1.transpose(),
            proj_v: v_star.rows(t1, t - t1) * gv_inv * v1.transpose(),
        })
    }

    /// `γ★` at local block-d coordinates.
    pub fn cell(&self, sigma: &DMatrix<f64>, j: usize, s: usize) -> f64 {
        let (i, t) = (self.n1 + j, self.t1 + s);
        let mut total = 0.0;
        for k in 0..self.n1 {
            let w = self.proj_u[(j, k)];
            total += sigma[(k, t)].powi(2) * w * w;
        }
        for q in 0..self.t1 {
            let w = self.proj_v[(s, q)];
            total += sigma[(i, q)].powi(2) * w * w;
        }
        total
    }

    pub fn unit_projection(&self) -> &DMatrix<f64> {
        &self.proj_u
    }

    pub fn time_projection(&self) -> &DMatrix<f64> {
        &self.proj_v
    }
}
