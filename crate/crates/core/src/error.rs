use thiserror::Error;

pub type Result<T, E = RetardaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetardaError {
    /// An argument lies outside the interval on which the object is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects were sampled on incompatible grids, or a time is off-grid.
    #[error("grid error: {0}")]
    Grid(String),

    /// Solver configuration violates a precondition (e.g. the contraction condition).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    #[error("fixed-point iteration did not converge at t = {time} after {iterations} sweeps (last change {residual:e})")]
    Iteration {
        time: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("numerical overflow: {0}")]
    Overflow(String),
}
