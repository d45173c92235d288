use thiserror::Error;

/// Errors raised by the estimation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Shapes or ranks that cannot be reconciled.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Malformed input values (non-finite entries, bad levels, empty vectors).
    #[error("invalid input: {0}")]
    Input(String),

    /// The requested rank exceeds what a (sub-)problem can support.
    #[error("rank {rank} infeasible for {context}: requires rank <= min({n1}, {t1})")]
    RankInfeasible {
        rank: usize,
        n1: usize,
        t1: usize,
        context: String,
    },

    /// A Gram matrix of a subspace block is too ill-conditioned to invert.
    #[error("ill-conditioned {which} in {context}: condition number {condition:.3e} exceeds {limit:.0e}")]
    Conditioning {
        which: &'static str,
        context: String,
        condition: f64,
        limit: f64,
    },

    /// An index falls outside the region an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A staggered design the estimator cannot handle.
    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),

    /// Invalid model or experiment parameters.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An error raised inside one Monte-Carlo replication.
    #[error("replication {index}: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Replaces the sub-problem description carried by rank and conditioning errors.
    pub fn in_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::RankInfeasible { rank, n1, t1, .. } => Error::RankInfeasible {
                rank,
                n1,
                t1,
                context: ctx.into(),
            },
            Error::Conditioning {
                which,
                condition,
                limit,
                ..
            } => Error::Conditioning {
                which,
                context: ctx.into(),
                condition,
                limit,
            },
            other => other,
        }
    }

    /// True for failures of the numerical pipeline itself (rank or conditioning).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankInfeasible { .. } | Error::Conditioning { .. } => true,
            Error::Replication { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
