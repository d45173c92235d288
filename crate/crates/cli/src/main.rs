use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use panelci_cli::analyze::{run_analysis, AnalysisConfig, RankChoice};
use panelci_cli::simulate::{run_simulation, Summary};
use panelci_cli::{ingest, CliError, Result, THREADS_ENV};
use panelci_core::par;

/// Low-rank counterfactual estimation and confidence intervals for
/// staggered-adoption panels.
#[derive(Parser)]
#[command(name = "panelci", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate counterfactuals, intervals and the significance report for a panel.
    Analyze {
        /// Wide CSV: unit id column, then one column per time label.
        #[arg(long)]
        panel: PathBuf,
        /// CSV of unit id and adoption time label (or `never`).
        #[arg(long)]
        adoption: PathBuf,
        /// Estimator rank, or `auto` to pick it from the scree profile.
        #[arg(long)]
        rank: RankChoice,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Odd window of a centered moving average applied to every unit.
        #[arg(long)]
        moving_average: Option<usize>,
        /// Time labels to drop, comma separated.
        #[arg(long, value_delimiter = ',')]
        exclude_times: Vec<String>,
        /// CSV of unit id and weight for the population effect column.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a coverage or power experiment described by a TOML file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a long `unit,time,value` CSV into the wide panel layout.
    ConvertLong {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            panel,
            adoption,
            rank,
            alpha,
            moving_average,
            exclude_times,
            weights,
            seed,
            out,
        } => {
            let cfg = AnalysisConfig {
                panel,
                adoption,
                rank,
                alpha,
                moving_average,
                exclude_times,
                weights,
                seed,
                out,
            };
            let a = run_analysis(&cfg)?;
            let m = &a.metadata;
            let scree: Vec<String> = m.scree.singular_values.iter().map(|s| format!("{s:.4}")).collect();
            eprintln!("scree ({}): [{}]", m.scree.source, scree.join(", "));
            eprintln!(
                "rank {} ({}; suggested {}, max {}), k = {}",
                m.rank, m.rank_source, m.scree.suggested_rank, m.scree.max_rank, m.partition.k
            );
            if let Some(note) = &m.isnr_advisory {
                eprintln!("warning: {note}");
            }
            eprintln!("wrote {}", cfg.out.display());
        }
        Command::Simulate { config, out } => {
            match run_simulation(&config, &out)? {
                Summary::Coverage { runs } => {
                    for run in runs {
                        let r = &run.result;
                        eprintln!(
                            "N={} T={}: ITE coverage {:.4} (se {:.4}), ATET coverage {:.4} (se {:.4}), nominal {}",
                            run.config.n, run.config.t, r.ite.coverage, r.ite.mc_se, r.atet.coverage, r.atet.mc_se, r.nominal
                        );
                    }
                }
                Summary::Power { points, .. } => {
                    for p in points {
                        eprintln!("{:?} alpha={}: power {:.4} (se {:.4})", p.target, p.alpha, p.power, p.mc_se);
                    }
                }
            }
            eprintln!("wrote {}", out.display());
        }
        Command::ConvertLong { input, out } => {
            let raw = ingest::long_to_wide(&input)?;
            ingest::write_raw_panel(&out, &raw)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = threads().and_then(|n| par::with_threads(n, || run(cli)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
