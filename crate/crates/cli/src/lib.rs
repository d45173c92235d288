//! Ingestion, preprocessing and report emission for panel analyses and
//! simulations. The `panelci` binary is a thin wrapper around
//! [`analyze::run_analysis`] and [`simulate::run_simulation`].

pub mod analyze;
pub mod error;
pub mod format;
pub mod ingest;
pub mod preprocess;
pub mod simulate;

pub use error::{CliError, Result};

/// Environment variable holding the worker thread count (0 or unset: all cores).
pub const THREADS_ENV: &str = "PANELCI_THREADS";
