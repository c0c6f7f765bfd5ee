use thiserror::Error;

/// Errors produced by grid construction, parameter validation, solvers and
/// file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid construction rejected its inputs.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A model parameter violates its constraint; the message names the
    /// constraint that failed.
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    /// Two fields that must share a grid do not.
    #[error("fields live on different grids")]
    GridMismatch,

    /// A fiber scale or dilation factor was non-positive or non-finite.
    #[error("invalid scale factor {0}; must be positive and finite")]
    InvalidScale(f64),

    /// An operation received an input it cannot act on (zero state,
    /// vanishing integrals, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A resampled solution no longer decays inside the box.
    #[error("box too small: {0}")]
    BoxTooSmall(String),

    /// An iteration failed to reach its tolerance.
    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    /// A root was not bracketed within the search interval.
    #[error("root not bracketed: {0}")]
    NotBracketed(String),

    /// A fiber path endpoint failed its admissibility condition.
    #[error("inadmissible path endpoint ({endpoint}): {detail}")]
    PathEndpoint {
        endpoint: &'static str,
        detail: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A field file did not conform to the AGF1 layout.
    #[error("malformed AGF1 file: {0}")]
    Format(String),
}
