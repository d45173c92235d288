//! The `analyze` command: estimation on a real panel and its report files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use panelci_core::lowrank::{select_rank, singular_values};
use panelci_core::staggered::{
    build_staircase, critical_value, significance_report, staggered_conf, InferenceGrid, PanelData,
    ReportGrouping, SignificanceRow, StaircasePartition, SubproblemDiagnostics, CROSS_BLOCK_VARIANCE,
};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::format::{num, opt, rounded};
use crate::ingest::{self, write_file, Ingested};
use crate::preprocess::moving_average;

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SIGNIFICANCE_FILE: &str = "significance.csv";
pub const SIGNIFICANCE_ROUNDED_FILE: &str = "significance_rounded.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// ISNR above which the metadata flags weak signal.
pub const ISNR_ADVISORY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankChoice {
    Fixed(usize),
    Auto,
}

impl FromStr for RankChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(RankChoice::Auto);
        }
        match s.parse::<usize>() {
            Ok(r) if r >= 1 => Ok(RankChoice::Fixed(r)),
            _ => Err(format!("rank must be a positive integer or `auto`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub panel: PathBuf,
    pub adoption: PathBuf,
    pub rank: RankChoice,
    pub alpha: f64,
    pub moving_average: Option<usize>,
    pub exclude_times: Vec<String>,
    pub weights: Option<PathBuf>,
    /// Recorded in the metadata; the analysis itself draws no random numbers.
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(w) = self.moving_average {
            if w == 0 || w.is_multiple_of(2) {
                return Err(CliError::Config(format!(
                    "moving-average window must be odd and at least 1, got {w}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScreeReport {
    /// Block the singular values were taken from.
    pub source: String,
    pub singular_values: Vec<f64>,
    /// Largest rank every sub-problem supports.
    pub max_rank: usize,
    /// Rank at the sharpest drop.
    pub suggested_rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub k: usize,
    pub group_sizes: Vec<usize>,
    pub stage_lengths: Vec<usize>,
    /// Time label at which each stage starts.
    pub stage_starts: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub panel_file: String,
    pub adoption_file: String,
    pub weights_file: Option<String>,
    pub units: usize,
    pub times: usize,
    pub excluded_times: Vec<String>,
    pub moving_average: Option<usize>,
    pub alpha: f64,
    pub nominal_level: f64,
    pub critical_value: f64,
    pub rank: usize,
    pub rank_source: &'static str,
    pub scree: ScreeReport,
    pub partition: PartitionReport,
    pub subproblems: Vec<SubproblemDiagnostics>,
    pub max_isnr: Option<f64>,
    pub isnr_advisory: Option<String>,
    pub cross_block_variance: &'static str,
    pub seed: Option<u64>,
}

/// Singular values of the largest fully untreated block.
///
/// Two candidates: never-treated units over all times, and all units over the
/// periods before the first adoption. The one with the larger smaller side is
/// used; ties go to the never-treated rows.
pub fn scree(panel: &PanelData, part: &StaircasePartition) -> Result<ScreeReport> {
    let y = panel.values();
    let controls = part.group_units(0);
    let pre = part.stage_range(0);
    let (n, t) = y.shape();
    let rows_block = controls.len().min(t);
    let cols_block = n.min(pre.len());
    let (source, block) = if rows_block >= cols_block {
        (
            format!("{} never-treated units x {t} periods", controls.len()),
            DMatrix::from_fn(controls.len(), t, |i, j| y[(controls[i], j)]),
        )
    } else {
        (
            format!("{n} units x {} pre-adoption periods", pre.len()),
            y.columns(pre.start, pre.len()).into_owned(),
        )
    };
    let singular_values = singular_values(&block)?;
    let max_rank = part
        .subproblem_ids()
        .into_iter()
        .map(|id| part.subproblem_dims(id).map(|(n1, t1, _, _)| n1.min(t1)))
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .min()
        .unwrap_or(n.min(t));
    let suggested_rank = if singular_values.len() < 2 {
        1
    } else {
        select_rank(&singular_values, max_rank)?
    };
    Ok(ScreeReport {
        source,
        singular_values,
        max_rank,
        suggested_rank,
    })
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let err = |e: csv::Error| CliError::Data(format!("writing csv: {e}"));
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Data(format!("writing csv: {e}")))?;
    }
    Ok(out)
}

const TIMESERIES_HEADER: [&str; 13] = [
    "unit",
    "time",
    "observed",
    "analyzed",
    "treated",
    "counterfactual",
    "counterfactual_se",
    "counterfactual_lower",
    "counterfactual_upper",
    "ite",
    "ite_se",
    "ite_lower",
    "ite_upper",
];

/// Long-format series, one row per cell in file unit order then time order.
pub fn timeseries_rows(observed: &DMatrix<f64>, grid: &InferenceGrid) -> Result<Vec<Vec<String>>> {
    let panel = grid.panel();
    let y = panel.values();
    let mut rows = Vec::with_capacity(y.len());
    for (i, unit) in panel.units().iter().enumerate() {
        for (t, time) in panel.times().iter().enumerate() {
            let mut row = vec![unit.clone(), time.clone(), num(observed[(i, t)]), num(y[(i, t)])];
            match grid.cell(i, t) {
                None => {
                    row.push("0".into());
                    row.extend(std::iter::repeat_n(String::new(), 8));
                }
                Some(cf) => {
                    let ite = grid.ite(i, t)?;
                    row.push("1".into());
                    for ci in [cf, ite] {
                        row.extend([num(ci.point), num(ci.se()), num(ci.lower), num(ci.upper)]);
                    }
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

const SIGNIFICANCE_HEADER: [&str; 12] = [
    "time",
    "treated",
    "positive",
    "negative",
    "null",
    "atet",
    "atet_se",
    "atet_lower",
    "atet_upper",
    "population_effect",
    "population_se",
    "alpha",
];

fn significance_rows(rows: &[SignificanceRow], alpha: f64, f: fn(f64) -> String) -> Vec<Vec<String>> {
    let z = critical_value(alpha);
    rows.iter()
        .map(|r| {
            vec![
                r.time.clone(),
                r.treated.to_string(),
                r.positive.to_string(),
                r.negative.to_string(),
                r.null.to_string(),
                f(r.atet),
                f(r.atet_se),
                f(r.atet - z * r.atet_se),
                f(r.atet + z * r.atet_se),
                opt(r.population_effect, f),
                opt(r.population_se, f),
                num_plain(alpha),
            ]
        })
        .collect()
}

// alpha is user input; print it as given rather than in exponent form
fn num_plain(x: f64) -> String {
    format!("{x}")
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Everything `run_analysis` computes, before it is written out.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub ingested: Ingested,
    pub grid: InferenceGrid,
    pub report: Vec<SignificanceRow>,
    pub metadata: Metadata,
}

/// Estimation, inference and significance report for an ingested panel.
pub fn analyze(cfg: &AnalysisConfig, ingested: Ingested, weights: Option<Vec<f64>>) -> Result<Analysis> {
    cfg.validate()?;
    let raw = ingested.panel.values();
    let analyzed = match cfg.moving_average {
        Some(w) => PanelData::new(
            moving_average(raw, w)?,
            ingested.panel.units().to_vec(),
            ingested.panel.times().to_vec(),
        )?,
        None => ingested.panel.clone(),
    };
    let part = build_staircase(&ingested.schedule, analyzed.n_times())?;
    let scree = scree(&analyzed, &part)?;
    let (rank, rank_source) = match cfg.rank {
        RankChoice::Fixed(r) => (r, "fixed"),
        RankChoice::Auto => (scree.suggested_rank, "auto"),
    };
    let grid = staggered_conf(&analyzed, &ingested.schedule, rank, cfg.alpha)?;

    let mut report = significance_report(&grid, cfg.alpha, ReportGrouping::PerTime, weights.as_deref())?;
    if part.k() > 1 {
        report.extend(significance_report(&grid, cfg.alpha, ReportGrouping::Pooled, None)?);
    }

    let subproblems = grid.diagnostics();
    let max_isnr = subproblems.iter().map(|d| d.isnr).reduce(f64::max);
    let isnr_advisory = max_isnr.filter(|&m| m > ISNR_ADVISORY || m.is_nan()).map(|m| {
        format!("largest ISNR {m:.3} exceeds {ISNR_ADVISORY}; signal may be too weak for reliable intervals")
    });
    let times = analyzed.times();
    let metadata = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        panel_file: file_name(&cfg.panel),
        adoption_file: file_name(&cfg.adoption),
        weights_file: cfg.weights.as_deref().map(file_name),
        units: analyzed.n_units(),
        times: analyzed.n_times(),
        excluded_times: ingested.excluded.clone(),
        moving_average: cfg.moving_average,
        alpha: cfg.alpha,
        nominal_level: 1.0 - cfg.alpha,
        critical_value: critical_value(cfg.alpha),
        rank,
        rank_source,
        scree,
        partition: PartitionReport {
            k: part.k(),
            group_sizes: part.group_sizes().to_vec(),
            stage_lengths: part.stage_lengths().to_vec(),
            stage_starts: (0..part.k()).map(|j| times[part.stage_range(j).start].clone()).collect(),
        },
        subproblems,
        max_isnr,
        isnr_advisory,
        cross_block_variance: CROSS_BLOCK_VARIANCE,
        seed: cfg.seed,
    };
    Ok(Analysis {
        ingested,
        grid,
        report,
        metadata,
    })
}

/// Writes the four report files into `out`.
pub fn write_outputs(out: &Path, analysis: &Analysis) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let alpha = analysis.metadata.alpha;
    let series = timeseries_rows(analysis.ingested.panel.values(), &analysis.grid)?;
    write_file(&out.join(TIMESERIES_FILE), &csv_bytes(&TIMESERIES_HEADER, series)?)?;
    write_file(
        &out.join(SIGNIFICANCE_FILE),
        &csv_bytes(&SIGNIFICANCE_HEADER, significance_rows(&analysis.report, alpha, num))?,
    )?;
    write_file(
        &out.join(SIGNIFICANCE_ROUNDED_FILE),
        &csv_bytes(&SIGNIFICANCE_HEADER, significance_rows(&analysis.report, alpha, rounded))?,
    )?;
    let mut json = serde_json::to_vec_pretty(&analysis.metadata)
        .map_err(|e| CliError::Data(format!("serializing metadata: {e}")))?;
    json.push(b'\n');
    write_file(&out.join(METADATA_FILE), &json)
}

/// Ingests, analyzes and writes every report for `cfg`.
pub fn run_analysis(cfg: &AnalysisConfig) -> Result<Analysis> {
    cfg.validate()?;
    let ingested = ingest::ingest(&cfg.panel, &cfg.adoption, &cfg.exclude_times)?;
    let weights = cfg
        .weights
        .as_deref()
        .map(|p| ingest::read_weights(p, ingested.panel.units()))
        .transpose()?;
    let analysis = analyze(cfg, ingested, weights)?;
    write_outputs(&cfg.out, &analysis)?;
    Ok(analysis)
}
