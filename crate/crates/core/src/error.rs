use std::path::PathBuf;

use crate::optimizer::SolveDiagnostics;
use crate::weights::WeightVector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("unknown key `{key}` in `{context}`")]
    UnknownKey { key: String, context: String },

    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("floating-point overflow: {0}")]
    Overflow(String),

    #[error("Fibonacci number F_{0} does not fit in 64-bit exact mode (M <= 92)")]
    OverflowExactMode(usize),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("function is not finite at x = {0}")]
    NonFiniteFunction(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient evaluation points: need at least {need}, got {got}")]
    InsufficientPoints { need: usize, got: usize },

    #[error("insufficient replicates: need at least {need}, got {got}")]
    InsufficientReplicates { need: usize, got: usize },

    #[error("degenerate dictionary: every component collapsed under orthogonalization")]
    DegenerateDictionary,

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("solver did not converge: gap {:.3e} after {} iterations", .diagnostics.gap, .diagnostics.iterations)]
    NotConverged {
        weights: Box<WeightVector>,
        diagnostics: Box<SolveDiagnostics>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
