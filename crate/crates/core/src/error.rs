use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants map onto the CLI exit codes through [`Error::exit_code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("hypothesis violation: {quantity} ({detail})")]
    HypothesisViolation { quantity: String, detail: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("symmetry error: asymmetry {asymmetry:.3e} in {matrix}")]
    Symmetry { matrix: String, asymmetry: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("compensating matrix search failed: best lambda_min = {best_lambda_min:.3e}")]
    SearchFailure { best_lambda_min: f64 },

    #[error("branch continuation ambiguous near xi = {xi:.3e}")]
    Continuation { xi: f64 },

    #[error("CFL violation: dt = {dt:.3e} exceeds limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("positivity lost in cell {cell} at t = {t:.6}")]
    PositivityLoss { cell: usize, t: f64 },

    #[error("Newton iteration diverged in cell {cell} after {iterations} iterations")]
    NewtonDivergence { cell: usize, iterations: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command line front-end.
    ///
    /// `2` is reserved for verdict failures, which are not errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Dimension(_) => 4,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
