use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("chain of {requested} sites exceeds the configured capacity of {max} sites")]
    Capacity { requested: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("eigensolver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NotConverged { iterations: usize, best_residual: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("bipartition mismatch: {0}")]
    Bipartition(String),

    #[error("trajectory maximum sits on the grid boundary at g = {g} (N = {n_sites}, k = {k})")]
    BoundaryMax { g: f64, n_sites: usize, k: usize },

    #[error("ill-conditioned normal equations (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("unsupported block: {0}")]
    UnsupportedBlock(String),

    #[error("fermion oracle declined: {0}")]
    OracleDeclined(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotConverged { .. } | Error::BoundaryMax { .. } | Error::IllConditioned { .. } | Error::OracleDeclined(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
