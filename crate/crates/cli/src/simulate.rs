//! The `simulate` command: coverage and size-vs-power experiments from a TOML file.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use panelci_core::synth::{
    coverage_experiment, fit_factor_model, power_experiment, AdoptionWindow, CoverageResult, Design,
    ExperimentConfig, FactorModelParams, NoiseModel, PowerConfig, PowerPoint, PowerTarget,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::format::num;
use crate::ingest::{read_panel, write_file};

pub const COVERAGE_FILE: &str = "coverage.csv";
pub const POWER_FILE: &str = "power.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Coverage,
    Power,
}

/// Factor model given explicitly or fitted to a panel file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ModelSpec {
    Explicit {
        u_mean: Vec<f64>,
        v_mean: Vec<f64>,
        u_cov: Vec<Vec<f64>>,
        v_cov: Vec<Vec<f64>>,
        noise_var: f64,
    },
    /// Wide CSV without missing cells; relative paths are taken from the config file's directory.
    Fitted { panel: PathBuf, rank: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    /// Halves of the panel unless given.
    FourBlock { n1: Option<usize>, t1: Option<usize> },
    Staggered {
        #[serde(default = "default_window")]
        window: WindowSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSpec {
    Times,
    Units,
}

fn default_window() -> WindowSpec {
    WindowSpec::Times
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    FromModel,
    Homoskedastic { sigma: f64 },
    Heteroskedastic { sigma_min: f64, sigma_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSpec {
    pub alphas: Vec<f64>,
    pub effect_size: f64,
    pub calibration_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub kind: Kind,
    pub seed: u64,
    pub reps: usize,
    /// Panel size; ignored when `sizes` is given.
    pub n: Option<usize>,
    pub t: Option<usize>,
    /// Square panels `N = T = size`, one coverage run each.
    pub sizes: Option<Vec<usize>>,
    /// Estimator rank; defaults to the model rank.
    pub rank: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub model: ModelSpec,
    pub design: Option<DesignSpec>,
    pub noise: Option<NoiseSpec>,
    pub power: Option<PowerSpec>,
}

fn default_alpha() -> f64 {
    0.05
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if rows.iter().any(|row| row.len() != r) {
        return Err(CliError::Config(format!("{what} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = Self::from_toml(&text).map_err(|e| e.context(path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn params(&self, base: &Path) -> Result<FactorModelParams> {
        match &self.model {
            ModelSpec::Explicit {
                u_mean,
                v_mean,
                u_cov,
                v_cov,
                noise_var,
            } => Ok(FactorModelParams::new(
                u_mean.clone(),
                v_mean.clone(),
                matrix(u_cov, "u_cov")?,
                matrix(v_cov, "v_cov")?,
                *noise_var,
            )?),
            ModelSpec::Fitted { panel, rank } => {
                let path = base.join(panel);
                let raw = read_panel(&path)?;
                let n = raw.units.len();
                let t = raw.times.len();
                let mut values = Vec::with_capacity(n * t);
                for (unit, row) in raw.units.iter().zip(&raw.cells) {
                    for (time, cell) in raw.times.iter().zip(row) {
                        values.push(cell.ok_or_else(|| {
                            CliError::Data(format!(
                                "{}: missing cell ({unit}, {time}); the model panel must be complete",
                                path.display()
                            ))
                        })?);
                    }
                }
                let y = DMatrix::from_row_slice(n, t, &values);
                Ok(fit_factor_model(&y, *rank)?)
            }
        }
    }

    /// Panel sizes this configuration runs, in order.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        match (&self.sizes, self.n, self.t) {
            (Some(s), None, None) if !s.is_empty() => Ok(s.iter().map(|&k| (k, k)).collect()),
            (Some(_), _, _) => Err(CliError::Config("give either `sizes` (non-empty) or `n` and `t`".into())),
            (None, Some(n), Some(t)) => Ok(vec![(n, t)]),
            (None, _, _) => Err(CliError::Config("`n` and `t` are required without `sizes`".into())),
        }
    }

    /// Library configuration for one panel shape.
    pub fn experiment(&self, params: &FactorModelParams, n: usize, t: usize) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(params.clone(), n, t, self.reps, self.seed);
        if let Some(r) = self.rank {
            cfg.rank = r;
        }
        cfg.alpha = self.alpha;
        if let Some(d) = self.design {
            cfg.design = match d {
                DesignSpec::FourBlock { n1, t1 } => Design::FourBlock {
                    n1: n1.unwrap_or(n / 2),
                    t1: t1.unwrap_or(t / 2),
                },
                DesignSpec::Staggered { window } => Design::Staggered {
                    window: match window {
                        WindowSpec::Times => AdoptionWindow::Times,
                        WindowSpec::Units => AdoptionWindow::Units,
                    },
                },
            };
        }
        if let Some(noise) = self.noise {
            cfg.noise = match noise {
                NoiseSpec::FromModel => NoiseModel::FromModel,
                NoiseSpec::Homoskedastic { sigma } => NoiseModel::Homoskedastic { sigma },
                NoiseSpec::Heteroskedastic { sigma_min, sigma_max } => {
                    NoiseModel::Heteroskedastic { sigma_min, sigma_max }
                }
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn power_config(&self, base: ExperimentConfig) -> Result<PowerConfig> {
        let power = self
            .power
            .as_ref()
            .ok_or_else(|| CliError::Config("kind = \"power\" needs a [power] section".into()))?;
        let cfg = PowerConfig {
            base,
            alphas: power.alphas.clone(),
            effect_size: power.effect_size,
            calibration_reps: power.calibration_reps,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageRun {
    pub config: ExperimentConfig,
    pub result: CoverageResult,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    Coverage { runs: Vec<CoverageRun> },
    Power { config: PowerConfig, points: Vec<PowerPoint> },
}

const COVERAGE_HEADER: [&str; 12] = [
    "n",
    "t",
    "target",
    "reps",
    "nominal",
    "checks",
    "hits",
    "coverage",
    "mc_se",
    "mean_width",
    "mse",
    "variance_relative_error",
];

const POWER_HEADER: [&str; 8] = [
    "target",
    "alpha",
    "effect_size",
    "critical",
    "rejections",
    "reps",
    "power",
    "mc_se",
];

fn target_name(t: PowerTarget) -> &'static str {
    match t {
        PowerTarget::Ite => "ite",
        PowerTarget::Atet => "atet",
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let err = |e: csv::Error| CliError::Data(format!("writing {}: {e}", path.display()));
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_file(path, &out)
}

/// Runs the experiments a configuration asks for; nothing is written.
pub fn simulate(cfg: &SimulationConfig, base: &Path) -> Result<Summary> {
    let params = cfg.params(base)?;
    let shapes = cfg.shapes()?;
    match cfg.kind {
        Kind::Coverage => {
            let mut runs = Vec::new();
            for (n, t) in shapes {
                let config = cfg.experiment(&params, n, t)?;
                let result = coverage_experiment(&config)?;
                runs.push(CoverageRun { config, result });
            }
            Ok(Summary::Coverage { runs })
        }
        Kind::Power => {
            let [(n, t)] = shapes[..] else {
                return Err(CliError::Config("power experiments take a single panel size".into()));
            };
            let config = cfg.power_config(cfg.experiment(&params, n, t)?)?;
            let points = power_experiment(&config)?;
            Ok(Summary::Power { config, points })
        }
    }
}

/// Writes the results table and `summary.json` into `out`.
pub fn write_outputs(out: &Path, summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    match summary {
        Summary::Coverage { runs } => {
            let mut rows = Vec::new();
            for run in runs {
                let r = &run.result;
                for (name, s) in [("ite", &r.ite), ("atet", &r.atet)] {
                    rows.push(vec![
                        run.config.n.to_string(),
                        run.config.t.to_string(),
                        name.to_string(),
                        r.reps.to_string(),
                        num(r.nominal),
                        s.checks.to_string(),
                        s.hits.to_string(),
                        num(s.coverage),
                        num(s.mc_se),
                        num(s.mean_width),
                        num(s.mse),
                        r.variance_relative_error.map(num).unwrap_or_default(),
                    ]);
                }
            }
            write_csv(&out.join(COVERAGE_FILE), &COVERAGE_HEADER, rows)?;
        }
        Summary::Power { config, points } => {
            let rows = points
                .iter()
                .map(|p| {
                    vec![
                        target_name(p.target).to_string(),
                        num(p.alpha),
                        num(config.effect_size),
                        num(p.critical),
                        p.rejections.to_string(),
                        p.reps.to_string(),
                        num(p.power),
                        num(p.mc_se),
                    ]
                })
                .collect();
            write_csv(&out.join(POWER_FILE), &POWER_HEADER, rows)?;
        }
    }
    let mut json =
        serde_json::to_vec_pretty(summary).map_err(|e| CliError::Data(format!("serializing summary: {e}")))?;
    json.push(b'\n');
    write_file(&out.join(SUMMARY_FILE), &json)
}

/// Loads `config`, runs it and writes the outputs into `out`.
pub fn run_simulation(config: &Path, out: &Path) -> Result<Summary> {
    let (cfg, base) = SimulationConfig::load(config)?;
    let summary = simulate(&cfg, &base)?;
    write_outputs(out, &summary)?;
    Ok(summary)
}
