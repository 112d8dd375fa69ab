use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("point {0:?} lies outside the chart")]
    OutsideChart([f64; 4]),
    #[error("fields live on different charts or bundles")]
    ChartMismatch,
    #[error("operation requires {0}")]
    Unsupported(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty region")]
    EmptyRegion,
    #[error("zero curvature: center and scale are undefined")]
    ZeroCurvature,
    #[error("gluing data violates the separation constraint ({0} violations)")]
    GluingDataInvalid(usize),
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("fixed-point iteration diverged: residual history {0:?}")]
    Diverged(Vec<f64>),
    #[error("spectral data does not match the connection")]
    SpectralMismatch,
    #[error("parity precondition violated: {0}")]
    Parity(String),
    #[error("field dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
