use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An evaluation point lies outside `[0,1]`.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or algorithm parameter is out of range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A value violates a type invariant, e.g. a non-density where a density is required.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate support: a triangular density of zero width is a point mass")]
    DegenerateSupport,

    /// Tabulated intensity does not integrate to 1 within the tabulation tolerance.
    #[error("tabulation error: integral {integral} deviates from 1 by more than {tol:e}")]
    Tabulation { integral: f64, tol: f64 },

    /// Adaptive quadrature hit its depth limit; carries the partial result.
    #[error("quadrature did not converge (partial value {value}, error estimate {error_estimate:e})")]
    Convergence { value: f64, error_estimate: f64, evaluations: usize },

    /// Brute-force search exhausted its node budget.
    #[error("search budget of {budget} nodes exceeded (best so far {best})")]
    Budget { budget: usize, best: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
