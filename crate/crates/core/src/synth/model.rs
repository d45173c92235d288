//! Factor-model fitting and semi-synthetic panel generation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::rng::{SimRng, Stream};
use crate::error::{Error, Result};
use crate::lowrank::{check_finite, truncated_svd};
use crate::staggered::AdoptionSchedule;

/// Gaussian factor model: unit loadings, time factors and noise level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorModelParams {
    pub u_mean: Vec<f64>,
    pub v_mean: Vec<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub u_cov: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub v_cov: DMatrix<f64>,
    pub noise_var: f64,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        seq.serialize_element(&row.iter().copied().collect::<Vec<_>>())?;
    }
    seq.end()
}

impl FactorModelParams {
    pub fn new(
        u_mean: Vec<f64>,
        v_mean: Vec<f64>,
        u_cov: DMatrix<f64>,
        v_cov: DMatrix<f64>,
        noise_var: f64,
    ) -> Result<Self> {
        let r = u_mean.len();
        if r == 0 || v_mean.len() != r {
            return Err(Error::Parameter(format!(
                "means have lengths {} and {}; both must equal the rank (>= 1)",
                u_mean.len(),
                v_mean.len()
            )));
        }
        if u_cov.shape() != (r, r) || v_cov.shape() != (r, r) {
            return Err(Error::Parameter(format!("covariances must be {r}x{r}")));
        }
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::Parameter(format!("noise variance {noise_var} must be >= 0")));
        }
        if u_mean.iter().chain(&v_mean).any(|x| !x.is_finite()) {
            return Err(Error::Parameter("means must be finite".into()));
        }
        psd_cholesky(&u_cov)?;
        psd_cholesky(&v_cov)?;
        Ok(Self {
            u_mean,
            v_mean,
            u_cov,
            v_cov,
            noise_var,
        })
    }

    pub fn rank(&self) -> usize {
        self.u_mean.len()
    }
}

/// Lower-triangular factor of a symmetric positive semi-definite matrix.
///
/// Pivots within `1e-10 · max(1, max diagonal)` of zero are treated as exact
/// zeros (their column is zeroed), so singular and all-zero covariances are
/// accepted; clearly negative pivots or asymmetry are errors.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Parameter("covariance must be square".into()));
    }
    check_finite(a, "covariance").map_err(|e| Error::Parameter(e.to_string()))?;
    let scale = a.diagonal().iter().fold(1.0f64, |m, d| m.max(d.abs()));
    let tol = 1e-10 * scale;
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::Parameter(format!(
                    "covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::Parameter(format!(
                "covariance is not positive semi-definite (pivot {j} = {d:.3e})"
            )));
        }
        if d <= tol {
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / root;
        }
    }
    Ok(l)
}

fn row_mean_cov(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, r) = m.shape();
    let mean: Vec<f64> = (0..r).map(|j| m.column(j).sum() / n as f64).collect();
    let mut cov = DMatrix::zeros(r, r);
    if n > 1 {
        for row in m.row_iter() {
            for a in 0..r {
                for b in 0..r {
                    cov[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]);
                }
            }
        }
        cov /= (n - 1) as f64;
    }
    (mean, cov)
}

/// Fits the Gaussian factor model to a complete panel.
///
/// The rank-r SVD factors are scaled column-wise by `√σ_j`; their row means
/// and sample covariances (denominator n − 1) give the loading and factor
/// distributions, and the mean squared reconstruction residual gives the
/// noise variance.
pub fn fit_factor_model(y: &DMatrix<f64>, r: usize) -> Result<FactorModelParams> {
    let svd = truncated_svd(y, r)?;
    let roots = svd.s.map(f64::sqrt);
    let mut u_scaled = svd.u.clone();
    let mut v_scaled = svd.v.clone();
    for j in 0..r {
        u_scaled.column_mut(j).scale_mut(roots[j]);
        v_scaled.column_mut(j).scale_mut(roots[j]);
    }
    let resid = y - &u_scaled * v_scaled.transpose();
    let noise_var = resid.norm_squared() / (y.nrows() * y.ncols()) as f64;
    let (u_mean, u_cov) = row_mean_cov(&u_scaled);
    let (v_mean, v_cov) = row_mean_cov(&v_scaled);
    // Sample covariances are PSD up to rounding; symmetrize before validation.
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    FactorModelParams::new(u_mean, v_mean, sym(u_cov), sym(v_cov), noise_var)
}

/// Noise standard deviations across cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Use `√noise_var` of the factor model everywhere.
    FromModel,
    Homoskedastic { sigma: f64 },
    /// Per-cell deviation drawn uniformly from `[sigma_min, sigma_max]`.
    Heteroskedastic { sigma_min: f64, sigma_max: f64 },
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::FromModel => Ok(()),
            NoiseModel::Homoskedastic { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            NoiseModel::Heteroskedastic {
                sigma_min,
                sigma_max,
            } if sigma_min >= 0.0 && sigma_max >= sigma_min && sigma_max.is_finite() => Ok(()),
            other => Err(Error::Parameter(format!("invalid noise model {other:?}"))),
        }
    }
}

/// Range the adoption times of the treatment-time rule are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdoptionWindow {
    /// Uniform on `[0.7 T, 1.3 T]`; draws after the last period mean never treated.
    Times,
    /// Uniform on `[0.7 N, 1.3 N]`, indexed by the number of units.
    Units,
}

/// How units are assigned to treatment in a generated panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    /// First `n1` units never treated, the rest treated from column `t1`.
    FourBlock { n1: usize, t1: usize },
    /// Random staggered adoption from the treatment-time rule.
    Staggered { window: AdoptionWindow },
}

impl Design {
    pub fn validate(&self, n: usize, t: usize) -> Result<()> {
        match *self {
            Design::FourBlock { n1, t1 } if n1 >= 1 && n1 < n && t1 >= 1 && t1 < t => Ok(()),
            Design::FourBlock { n1, t1 } => Err(Error::Parameter(format!(
                "four-block split ({n1}, {t1}) invalid for a {n}x{t} panel"
            ))),
            Design::Staggered { .. } if n >= 2 && t >= 2 => Ok(()),
            Design::Staggered { .. } => Err(Error::Parameter(format!(
                "staggered design needs at least 2 units and 2 periods, got {n}x{t}"
            ))),
        }
    }
}

/// A generated panel together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub y: DMatrix<f64>,
    pub m_star: DMatrix<f64>,
    /// Noise standard deviation of every cell.
    pub sigma: DMatrix<f64>,
    /// Unit loadings φ, N×r.
    pub loadings: DMatrix<f64>,
    /// Time factors μ, T×r.
    pub factors: DMatrix<f64>,
    pub schedule: AdoptionSchedule,
    pub seed: u64,
}

impl SyntheticPanel {
    /// Sets every treated outcome to `M★ + effect`, so each ITE equals `effect`.
    pub fn inject_effect(&mut self, effect: f64) {
        for i in 0..self.y.nrows() {
            if let Some(a) = self.schedule.adoption(i) {
                for t in a..self.y.ncols() {
                    self.y[(i, t)] = self.m_star[(i, t)] + effect;
                }
            }
        }
    }
}

fn draw_gaussian_rows(
    rng: &mut SimRng,
    count: usize,
    mean: &[f64],
    chol: &DMatrix<f64>,
) -> DMatrix<f64> {
    let r = mean.len();
    let mut out = DMatrix::zeros(count, r);
    let mut z = DVector::zeros(r);
    for i in 0..count {
        for zj in z.iter_mut() {
            *zj = rng.standard_normal();
        }
        let x = chol * &z;
        for j in 0..r {
            out[(i, j)] = mean[j] + x[j];
        }
    }
    out
}

fn draw_schedule(rng: &mut SimRng, n: usize, t: usize, design: Design) -> AdoptionSchedule {
    match design {
        Design::FourBlock { n1, t1 } => AdoptionSchedule::four_block(n, n1, t1),
        Design::Staggered { window } => {
            let basis = match window {
                AdoptionWindow::Times => t,
                AdoptionWindow::Units => n,
            } as f64;
            // 1-based periods; the first period is reserved as pre-treatment.
            let lo = ((0.7 * basis).ceil() as usize).max(2);
            let hi = ((1.3 * basis).floor() as usize).max(lo);
            let mut times: Vec<Option<usize>> = (0..n)
                .map(|_| {
                    let period = rng.int_inclusive(lo, hi);
                    (period <= t).then(|| period - 1)
                })
                .collect();
            if times.iter().all(Option::is_some) {
                // keep a control group: the latest adopter becomes never-treated
                let latest = (0..n).max_by_key(|&i| (times[i], std::cmp::Reverse(i))).unwrap();
                times[latest] = None;
            }
            AdoptionSchedule::new(times)
        }
    }
}

/// Draws one panel: loadings, factors, noise levels, noise, then adoption times.
pub fn generate(
    params: &FactorModelParams,
    n: usize,
    t: usize,
    design: Design,
    noise: NoiseModel,
    rng: &mut SimRng,
) -> Result<SyntheticPanel> {
    if n == 0 || t == 0 {
        return Err(Error::Parameter(format!("panel size {n}x{t} must be positive")));
    }
    design.validate(n, t)?;
    noise.validate()?;
    let lv = psd_cholesky(&params.v_cov)?;
    let lu = psd_cholesky(&params.u_cov)?;

    let loadings = draw_gaussian_rows(rng, n, &params.v_mean, &lv);
    let factors = draw_gaussian_rows(rng, t, &params.u_mean, &lu);
    let m_star = &loadings * factors.transpose();

    let sigma = match noise {
        NoiseModel::FromModel => DMatrix::from_element(n, t, params.noise_var.sqrt()),
        NoiseModel::Homoskedastic { sigma } => DMatrix::from_element(n, t, sigma),
        NoiseModel::Heteroskedastic {
            sigma_min,
            sigma_max,
        } => {
            let mut s = DMatrix::zeros(n, t);
            for i in 0..n {
                for j in 0..t {
                    s[(i, j)] = sigma_min + (sigma_max - sigma_min) * rng.uniform();
                }
            }
            s
        }
    };
    let mut y = m_star.clone();
    for i in 0..n {
        for j in 0..t {
            let z = rng.standard_normal();
            y[(i, j)] += sigma[(i, j)] * z;
        }
    }
    let schedule = draw_schedule(rng, n, t, design);

    Ok(SyntheticPanel {
        y,
        m_star,
        sigma,
        loadings,
        factors,
        schedule,
        seed: 0,
    })
}

/// Generates an `n × t` panel with the model's own noise level and the
/// default staggered treatment-time rule.
pub fn generate_panel(params: &FactorModelParams, n: usize, t: usize, seed: u64) -> Result<SyntheticPanel> {
    let mut rng = SimRng::new(seed, Stream::Generate, 0);
    let mut panel = generate(
        params,
        n,
        t,
        Design::Staggered {
            window: AdoptionWindow::Times,
        },
        NoiseModel::FromModel,
        &mut rng,
    )?;
    panel.seed = seed;
    Ok(panel)
}
