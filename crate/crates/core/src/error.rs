use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },

    #[error("point {0:?} is not strictly inside the domain")]
    NotInterior([f64; 2]),

    #[error("media coefficients lose positivity: {0}")]
    Positivity(String),

    #[error("beam unresolved: {0}")]
    BeamResolution(String),

    #[error("beam has empty support on the inflow boundary")]
    EmptyBeamSupport,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("missing lattice measurement at q index ({0}, {1}) phase {2}")]
    MissingMeasurement(i64, i64, &'static str),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
