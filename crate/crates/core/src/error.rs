//! Error type shared by every module of the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("inadmissible symbol: value {value:e} at momentum {momentum}")]
    InadmissibleSymbol { value: f64, momentum: String },

    #[error("massless operator requires the zero mode to be excluded")]
    ZeroModeNotExcluded,

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("bracket invalid: both endpoints terminate as {0}")]
    BracketInvalid(String),

    #[error("shooting inconclusive: trajectory survived to j_max = {j_max} at nu0 = {nu0}")]
    Inconclusive { j_max: usize, nu0: f64 },

    #[error("non-convergent sequence: {0}")]
    NonConvergent(String),

    #[error("acceptance rate {rate:.4} below 1%; {hint}")]
    StepSize { rate: f64, hint: String },

    #[error("mode {0} is not on the sine-mode grid")]
    OffGrid(String),

    #[error("lattice of {sites} sites exceeds the desk budget of {limit}; pass the override flag to run it")]
    Budget { sites: usize, limit: usize },

    #[error("malformed cache file: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
