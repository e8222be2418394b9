use std::path::PathBuf;

use thiserror::Error;

/// Failure classes surfaced by the toolkit.
///
/// The harness maps these to process exit codes through [`Error::exit_code`]:
/// configuration problems are 1, numerical failures 2, I/O failures 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("merged support has {size} atoms, limit is {limit}")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time step {dt} outside admissible range (0, {max}]")]
    TimeStep { dt: f64, max: f64 },

    #[error("non-finite value produced at index {index} (t = {time})")]
    NonFinite { index: usize, time: f64 },

    #[error("negative density {value:e} in cell {cell} (t = {time})")]
    NegativeDensity { cell: usize, value: f64, time: f64 },

    #[error("characteristic map not monotone: v0'({x}) = {slope} <= -1")]
    NonMonotone { x: f64, slope: f64 },

    #[error("point {x} lies outside the sampled support [{lo}, {hi}]")]
    Extrapolation { x: f64, lo: f64, hi: f64 },

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Context { source, .. } => source.exit_code(),
            Error::InvalidKernel(_)
            | Error::InvalidMeasure(_)
            | Error::InvalidInput(_)
            | Error::Config(_)
            | Error::Json(_)
            | Error::DimensionMismatch { .. }
            | Error::LengthMismatch { .. }
            | Error::SupportTooLarge { .. } => 1,
            Error::TimeStep { .. }
            | Error::NonFinite { .. }
            | Error::NegativeDensity { .. }
            | Error::NonMonotone { .. }
            | Error::Extrapolation { .. }
            | Error::Solver(_) => 2,
            Error::Io { .. } | Error::Csv(_) => 3,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
