use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feature undefined: s0 = {s0} is not positive")]
    UndefinedFeature { s0: f64 },

    #[error("stokes vector is not physically valid (s0 = {s0}, dop = {dop})")]
    InvalidDecomposition { s0: f64, dop: f64 },

    #[error("spectral sampling mismatch: {0}")]
    Sampling(String),

    #[error("degenerate configuration: system matrix has rank {rank} (need 4)")]
    DegenerateConfiguration { rank: usize, singular_values: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing frame for channel {channel}, configuration {config}")]
    MissingFrame { channel: usize, config: usize },

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged {
        step: usize,
        loss: f64,
        /// Parameters from the last step with a finite loss.
        checkpoint: Box<crate::codecs::inr::InrModel>,
    },

    #[error("bad magic in {path}")]
    BadMagic { path: PathBuf },

    #[error("unsupported container version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("truncated container: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("corrupt container: {0}")]
    Corrupt(String),

    #[error("label schema: {0}")]
    Schema(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that come from the numbers rather than from inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::UndefinedFeature { .. }
                | Error::InvalidDecomposition { .. }
                | Error::DegenerateConfiguration { .. }
                | Error::Diverged { .. }
                | Error::EmptySelection(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::BadMagic { .. }
                | Error::Version { .. }
                | Error::Truncated { .. }
                | Error::Corrupt(_)
                | Error::Csv(_)
        )
    }
}
