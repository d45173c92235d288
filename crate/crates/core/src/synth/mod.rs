//! Semi-synthetic panels from a fitted factor model and the Monte-Carlo
//! harness built on them.
//!
//! Unit loadings are drawn from the time-factor row distribution of the fit
//! (`v_mean`, `v_cov`) and time factors from the unit-factor distribution
//! (`u_mean`, `u_cov`). The swap is deliberate and matches the generating
//! procedure this crate reproduces.

mod experiment;
mod model;
pub mod rng;

pub use experiment::{
    counterfactual_mse, coverage_experiment, empirical_critical, power_experiment,
    replication_panel, run_replication, summarize, CoverageResult, ExperimentConfig, PowerConfig,
    PowerPoint, PowerTarget, ReplicationOutcome, TargetSummary, TargetTally, MEMBERSHIP_SLACK,
};
pub use model::{
    fit_factor_model, generate, generate_panel, psd_cholesky, AdoptionWindow, Design,
    FactorModelParams, NoiseModel, SyntheticPanel,
};
pub use rng::{SimRng, Stream};
