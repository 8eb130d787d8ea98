use thiserror::Error;

/// Errors raised by the calculus. Variants map onto the CLI exit codes:
/// configuration/usage problems are 2, numerical guards are 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical consistency violated: {0}")]
    NumericalConsistency(String),

    #[error("admissible family is singular: {0}")]
    Admissibility(String),

    #[error("index window exhausted: need margin {needed}, symbol carries {available}")]
    Extension { needed: usize, available: usize },

    #[error("order {requested} exceeds the supported maximum {max}")]
    Range { requested: usize, max: usize },

    #[error("eigenfunction u_{xi} vanishes at grid point {grid_index}")]
    WzViolation { xi: i64, grid_index: usize },

    #[error("symbol is not elliptic: {0}")]
    Ellipticity(String),

    #[error("resolvent point {z} too close to the spectrum (condition {condition:.3e})")]
    SpectrumProximity { z: String, condition: f64 },

    #[error("symbol touches the branch cut of the logarithm at xi={xi}")]
    Branch { xi: i64 },

    #[error("contour error: {0}")]
    Contour(String),

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("picard iteration is not contracting: {0}")]
    NonContraction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the inputs rather than by numerical guards.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Usage(_) | Error::Shape { .. } | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
