//! Monte-Carlo coverage and size-vs-power experiments.

use nalgebra::DMatrix;
use serde::Serialize;

use super::model::{generate, Design, FactorModelParams, NoiseModel, SyntheticPanel};
use super::rng::{SimRng, Stream};
use crate::error::{Error, Result};
use crate::fourblock::{check_alpha, OracleVariance};
use crate::par;
use crate::staggered::{staggered_conf, InferenceGrid, PanelData};

/// Absolute slack when testing interval membership, relative to `max(1, |truth|)`.
///
/// Without it a noiseless fit, whose interval collapses to a point, would
/// miss the truth by rounding error.
pub const MEMBERSHIP_SLACK: f64 = 1e-9;

/// One simulated setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub params: FactorModelParams,
    pub n: usize,
    pub t: usize,
    pub design: Design,
    /// Rank used by the estimator.
    pub rank: usize,
    pub noise: NoiseModel,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Four-block design split in half, model noise, `α = 0.05`.
    pub fn new(params: FactorModelParams, n: usize, t: usize, reps: usize, seed: u64) -> Self {
        let rank = params.rank();
        Self {
            params,
            n,
            t,
            design: Design::FourBlock { n1: n / 2, t1: t / 2 },
            rank,
            noise: NoiseModel::FromModel,
            alpha: 0.05,
            reps,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Parameter("reps must be at least 1".into()));
        }
        if self.rank == 0 {
            return Err(Error::Parameter("rank must be at least 1".into()));
        }
        check_alpha(self.alpha).map_err(|e| Error::Parameter(e.to_string()))?;
        self.design.validate(self.n, self.t)
    }

    fn draw(&self, rng: &mut SimRng) -> Result<SyntheticPanel> {
        generate(&self.params, self.n, self.t, self.design, self.noise, rng)
    }
}

/// Generates the panel of replication `rep` on `stream`.
pub fn replication_panel(cfg: &ExperimentConfig, stream: Stream, rep: usize) -> Result<SyntheticPanel> {
    let mut rng = SimRng::new(cfg.seed, stream, rep as u64);
    let mut panel = cfg.draw(&mut rng)?;
    panel.seed = cfg.seed;
    Ok(panel)
}

fn fit_panel(panel: &SyntheticPanel, rank: usize, alpha: f64) -> Result<InferenceGrid> {
    let data = PanelData::from_matrix(panel.y.clone())?;
    staggered_conf(&data, &panel.schedule, rank, alpha)
}

fn covers(lower: f64, upper: f64, truth: f64) -> bool {
    let slack = MEMBERSHIP_SLACK * truth.abs().max(1.0);
    lower - slack <= truth && truth <= upper + slack
}

/// Per-target tallies of one replication.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TargetTally {
    pub checks: usize,
    pub hits: usize,
    pub width_sum: f64,
    pub sq_error_sum: f64,
}

impl TargetTally {
    fn record(&mut self, lower: f64, upper: f64, estimate: f64, truth: f64) {
        self.checks += 1;
        self.hits += covers(lower, upper, truth) as usize;
        self.width_sum += upper - lower;
        self.sq_error_sum += (estimate - truth).powi(2);
    }

    fn merge(&mut self, other: &TargetTally) {
        self.checks += other.checks;
        self.hits += other.hits;
        self.width_sum += other.width_sum;
        self.sq_error_sum += other.sq_error_sum;
    }
}

/// Outcome of a single coverage replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub ite: TargetTally,
    pub atet: TargetTally,
    /// Median of `|γ̂ − γ★| / γ★` over treated cells (four-block design only).
    pub variance_relative_error: Option<f64>,
}

/// Runs replication `rep` of a coverage experiment.
pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<ReplicationOutcome> {
    let panel = replication_panel(cfg, Stream::Generate, rep)?;
    let grid = fit_panel(&panel, cfg.rank, cfg.alpha)?;
    let (n, t) = panel.y.shape();

    let mut ite = TargetTally::default();
    let mut atet = TargetTally::default();
    for time in 0..t {
        let treated = panel.schedule.treated_at(time);
        if treated.is_empty() {
            continue;
        }
        let mut truth = 0.0;
        for &unit in &treated {
            let tau = panel.y[(unit, time)] - panel.m_star[(unit, time)];
            truth += tau;
            let ci = grid.ite(unit, time)?;
            ite.record(ci.lower, ci.upper, ci.point, tau);
        }
        truth /= treated.len() as f64;
        let ci = grid.atet(time)?;
        atet.record(ci.lower, ci.upper, ci.point, truth);
    }

    let variance_relative_error = match cfg.design {
        Design::FourBlock { n1, t1 } => {
            let oracle = OracleVariance::new(&panel.loadings, &panel.factors, n1, t1)?;
            let mut rel: Vec<f64> = Vec::with_capacity((n - n1) * (t - t1));
            for unit in n1..n {
                for time in t1..t {
                    let star = oracle.cell(&panel.sigma, unit - n1, time - t1);
                    let hat = grid.cell(unit, time).expect("treated cell").variance;
                    if star > 0.0 {
                        rel.push((hat - star).abs() / star);
                    }
                }
            }
            median(&mut rel)
        }
        Design::Staggered { .. } => None,
    };

    Ok(ReplicationOutcome {
        ite,
        atet,
        variance_relative_error,
    })
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    })
}

/// Aggregate statistics for one inferential target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetSummary {
    pub checks: usize,
    pub hits: usize,
    pub coverage: f64,
    /// Binomial Monte-Carlo standard error `√(c(1−c)/checks)`.
    pub mc_se: f64,
    pub mean_width: f64,
    pub mse: f64,
}

impl From<&TargetTally> for TargetSummary {
    fn from(t: &TargetTally) -> Self {
        let k = t.checks.max(1) as f64;
        let coverage = t.hits as f64 / k;
        Self {
            checks: t.checks,
            hits: t.hits,
            coverage,
            mc_se: (coverage * (1.0 - coverage) / k).sqrt(),
            mean_width: t.width_sum / k,
            mse: t.sq_error_sum / k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub nominal: f64,
    pub reps: usize,
    pub ite: TargetSummary,
    pub atet: TargetSummary,
    /// Median over replications of the per-replication median relative error.
    pub variance_relative_error: Option<f64>,
}

/// Combines replication outcomes in index order.
pub fn summarize(cfg: &ExperimentConfig, outcomes: &[ReplicationOutcome]) -> CoverageResult {
    let mut ite = TargetTally::default();
    let mut atet = TargetTally::default();
    let mut rel = Vec::new();
    for o in outcomes {
        ite.merge(&o.ite);
        atet.merge(&o.atet);
        rel.extend(o.variance_relative_error);
    }
    CoverageResult {
        nominal: 1.0 - cfg.alpha,
        reps: outcomes.len(),
        ite: (&ite).into(),
        atet: (&atet).into(),
        variance_relative_error: median(&mut rel),
    }
}

fn tag_replication(index: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Replication {
        index,
        source: Box::new(e),
    }
}

/// Empirical coverage, interval width and MSE over `cfg.reps` replications.
pub fn coverage_experiment(cfg: &ExperimentConfig) -> Result<CoverageResult> {
    cfg.validate()?;
    let outcomes = par::try_map_indices(cfg.reps, |rep| {
        run_replication(cfg, rep).map_err(tag_replication(rep))
    })?;
    Ok(summarize(cfg, &outcomes))
}

/// Size-vs-power experiment settings. `base.alpha` is unused.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerConfig {
    pub base: ExperimentConfig,
    pub alphas: Vec<f64>,
    pub effect_size: f64,
    /// Replications used to calibrate critical values.
    pub calibration_reps: usize,
}

impl PowerConfig {
    /// Replications needed so the smallest level has at least five expected rejections.
    pub fn min_reps(&self) -> usize {
        let a = self.alphas.iter().copied().fold(f64::INFINITY, f64::min);
        (5.0 / a).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.rank == 0 {
            return Err(Error::Parameter("rank must be at least 1".into()));
        }
        self.base.design.validate(self.base.n, self.base.t)?;
        if !self.effect_size.is_finite() {
            return Err(Error::Parameter(format!(
                "effect size {} must be finite",
                self.effect_size
            )));
        }
        if self.alphas.is_empty() {
            return Err(Error::Parameter("at least one level is required".into()));
        }
        for &a in &self.alphas {
            check_alpha(a).map_err(|e| Error::Parameter(e.to_string()))?;
        }
        let need = self.min_reps();
        if self.base.reps < need || self.calibration_reps < need {
            return Err(Error::Parameter(format!(
                "reps ({}) and calibration_reps ({}) must each be at least {need} for the smallest level",
                self.base.reps, self.calibration_reps
            )));
        }
        Ok(())
    }
}

/// Target of a power test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerTarget {
    Ite,
    Atet,
}

/// One point of a size-vs-power curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub target: PowerTarget,
    pub alpha: f64,
    /// Calibrated multiplier of the standard error.
    pub critical: f64,
    pub rejections: usize,
    pub reps: usize,
    pub power: f64,
    pub mc_se: f64,
}

/// Absolute standardized errors `|estimate − truth| / se` of one null replication.
fn null_statistics(cfg: &ExperimentConfig, rep: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let panel = replication_panel(cfg, Stream::Calibrate, rep)?;
    // the level only affects interval bounds, not the statistics used here
    let grid = fit_panel(&panel, cfg.rank, 0.5)?;
    let mut ite = Vec::new();
    let mut atet = Vec::new();
    for time in 0..panel.y.ncols() {
        let treated = panel.schedule.treated_at(time);
        if treated.is_empty() {
            continue;
        }
        for &unit in &treated {
            let c = grid.cell(unit, time).expect("treated cell");
            ite.push(standardized(c.point - panel.m_star[(unit, time)], c.variance));
        }
        let a = grid.atet(time)?;
        let truth = treated
            .iter()
            .map(|&u| panel.y[(u, time)] - panel.m_star[(u, time)])
            .sum::<f64>()
            / treated.len() as f64;
        atet.push(standardized(a.point - truth, a.variance));
    }
    Ok((ite, atet))
}

fn standardized(err: f64, variance: f64) -> f64 {
    if variance > 0.0 {
        err.abs() / variance.sqrt()
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Upper empirical quantile: the smallest order statistic with at least
/// `(1 − α)` of the sample at or below it.
pub fn empirical_critical(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let k = ((1.0 - alpha) * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Test statistics `|τ̂| / se` of one replication with an injected effect.
fn alternative_statistics(cfg: &ExperimentConfig, effect: f64, rep: usize) -> Result<(f64, f64)> {
    let mut rng = SimRng::new(cfg.seed, Stream::Evaluate, rep as u64);
    let mut panel = cfg.draw(&mut rng)?;
    panel.inject_effect(effect);
    let grid = fit_panel(&panel, cfg.rank, 0.5)?;

    let cells: Vec<(usize, usize)> = (0..panel.y.ncols())
        .flat_map(|t| panel.schedule.treated_at(t).into_iter().map(move |u| (u, t)))
        .collect();
    let times: Vec<usize> = (0..panel.y.ncols())
        .filter(|&t| !panel.schedule.treated_at(t).is_empty())
        .collect();
    let (u, t) = cells[rng.int_inclusive(0, cells.len() - 1)];
    let time = times[rng.int_inclusive(0, times.len() - 1)];

    let ite = grid.ite(u, t)?;
    let atet = grid.atet(time)?;
    Ok((
        standardized(ite.point, ite.variance),
        standardized(atet.point, atet.variance),
    ))
}

/// Calibrated size-vs-power curve.
///
/// Critical multipliers come from the null distribution of standardized
/// errors on calibration replications; power is the rejection frequency of
/// `H₀: τ = 0` on fresh replications whose treated cells carry `effect_size`.
pub fn power_experiment(cfg: &PowerConfig) -> Result<Vec<PowerPoint>> {
    cfg.validate()?;
    let base = &cfg.base;

    let nulls = par::try_map_indices(cfg.calibration_reps, |rep| {
        null_statistics(base, rep).map_err(tag_replication(rep))
    })?;
    let mut ite_null: Vec<f64> = nulls.iter().flat_map(|(i, _)| i.iter().copied()).collect();
    let mut atet_null: Vec<f64> = nulls.iter().flat_map(|(_, a)| a.iter().copied()).collect();
    ite_null.sort_by(f64::total_cmp);
    atet_null.sort_by(f64::total_cmp);

    let stats = par::try_map_indices(base.reps, |rep| {
        alternative_statistics(base, cfg.effect_size, rep).map_err(tag_replication(rep))
    })?;

    let mut out = Vec::with_capacity(2 * cfg.alphas.len());
    for (target, null) in [(PowerTarget::Ite, &ite_null), (PowerTarget::Atet, &atet_null)] {
        for &alpha in &cfg.alphas {
            let critical = empirical_critical(null, alpha);
            let rejections = stats
                .iter()
                .filter(|s| {
                    let z = match target {
                        PowerTarget::Ite => s.0,
                        PowerTarget::Atet => s.1,
                    };
                    z > critical
                })
                .count();
            let power = rejections as f64 / stats.len() as f64;
            out.push(PowerPoint {
                target,
                alpha,
                critical,
                rejections,
                reps: stats.len(),
                power,
                mc_se: (power * (1.0 - power) / stats.len() as f64).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Average squared error of `M̂` over treated cells for each replication.
pub fn counterfactual_mse(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.validate()?;
    let per_rep = par::try_map_indices(cfg.reps, |rep| {
        let panel = replication_panel(cfg, Stream::Generate, rep).map_err(tag_replication(rep))?;
        let grid = fit_panel(&panel, cfg.rank, cfg.alpha).map_err(tag_replication(rep))?;
        let mut sum = 0.0;
        let mut count = 0usize;
        let err: &DMatrix<f64> = &panel.m_star;
        for time in 0..panel.y.ncols() {
            for unit in panel.schedule.treated_at(time) {
                let c = grid.cell(unit, time).expect("treated cell");
                sum += (c.point - err[(unit, time)]).powi(2);
                count += 1;
            }
        }
        Ok::<_, Error>((sum, count))
    })?;
    let (sum, count) = per_rep
        .iter()
        .fold((0.0, 0usize), |(s, c), &(a, b)| (s + a, c + b));
    Ok(sum / count.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(noise_var: f64) -> FactorModelParams {
        FactorModelParams::new(
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0]),
            noise_var,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_half_level_covers_everything() {
        let mut cfg = ExperimentConfig::new(params(0.0), 20, 16, 3, 1);
        cfg.alpha = 0.5;
        let res = coverage_experiment(&cfg).unwrap();
        assert_eq!(res.ite.coverage, 1.0);
        assert_eq!(res.atet.coverage, 1.0);
        assert!(res.ite.mse < 1e-18);
    }

    #[test]
    fn single_rep_equals_manual_run() {
        let cfg = ExperimentConfig::new(params(1.0), 20, 20, 1, 5);
        let res = coverage_experiment(&cfg).unwrap();
        let manual = run_replication(&cfg, 0).unwrap();
        assert_eq!(res, summarize(&cfg, &[manual]));
    }

    #[test]
    fn zero_reps_rejected() {
        let cfg = ExperimentConfig::new(params(1.0), 20, 20, 0, 5);
        assert!(matches!(coverage_experiment(&cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn failing_replication_reports_index() {
        let mut cfg = ExperimentConfig::new(params(1.0), 10, 10, 2, 5);
        cfg.rank = 6;
        match coverage_experiment(&cfg) {
            Err(Error::Replication { index: 0, source }) => {
                assert!(matches!(*source, Error::RankInfeasible { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empirical_critical_uses_upper_order_statistic() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_critical(&xs, 0.1), 9.0);
        assert_eq!(empirical_critical(&xs, 0.15), 9.0);
        assert_eq!(empirical_critical(&xs, 0.5), 5.0);
    }

    #[test]
    fn power_requires_enough_reps() {
        let cfg = PowerConfig {
            base: ExperimentConfig::new(params(1.0), 20, 20, 50, 5),
            alphas: vec![0.05],
            effect_size: 1.0,
            calibration_reps: 200,
        };
        match power_experiment(&cfg) {
            Err(Error::Parameter(msg)) => assert!(msg.contains("100"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = PowerConfig {
            effect_size: f64::NAN,
            ..cfg
        };
        assert!(power_experiment(&bad).is_err());
    }
}
