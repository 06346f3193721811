use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {column} is constant (zero variance)")]
    ConstantColumn { column: String },

    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("predictor {column}: no cutoff leaves at least {min_cell} observations on both sides")]
    NoAdmissibleCutoff { column: String, min_cell: usize },

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("numerical error in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error("need at least two chains for R-hat, got {0}")]
    InsufficientChains(usize),

    #[error("no posterior draws to summarize")]
    EmptyDraws,

    #[error("oracle would enumerate {count} configurations (cap {cap})")]
    TooManyConfigurations { count: usize, cap: usize },

    #[error("exact enumeration requires penalty = none")]
    UnsupportedPenalty,

    #[error("invalid correlation {0}: must lie in [0, 1)")]
    InvalidCorrelation(f64),

    #[error("chain {chain}, iteration {iteration}: {source}")]
    Chain {
        chain: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}, column '{column}': {detail}")]
    BadCell {
        path: PathBuf,
        row: usize,
        column: String,
        detail: String,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Config { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failure during
    /// computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::ConstantColumn { .. }
            | Error::InsufficientData { .. }
            | Error::NoAdmissibleCutoff { .. }
            | Error::DimensionMismatch { .. }
            | Error::Invalid { .. }
            | Error::InvalidCorrelation(_)
            | Error::TooManyConfigurations { .. }
            | Error::UnsupportedPenalty
            | Error::MissingColumn { .. }
            | Error::BadCell { .. }
            | Error::Csv { .. }
            | Error::Io { .. }
            | Error::Config { .. } => true,
            Error::Chain { source, .. } | Error::Replication { source, .. } => {
                source.is_validation()
            }
            Error::Numerical { .. } | Error::InsufficientChains(_) | Error::EmptyDraws => false,
        }
    }
}
