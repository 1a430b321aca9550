use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("polynomial is not harmonic (Laplacian residual {residual:e})")]
    NotHarmonic { residual: f64 },

    #[error("sphere rule exact to degree {have} but {need} is required")]
    InsufficientExactness { have: usize, need: usize },

    #[error("quadrature self-test failed: {0}")]
    QuadratureSelfTest(String),

    #[error("degenerate radius r = {r:e}: H = {h:e}")]
    DegenerateRadius { r: f64, h: f64 },

    #[error("gradient oracle unavailable and finite differences disabled")]
    GradientUnavailable,

    #[error("near-singular evaluation: distance {distance:e} to a source point")]
    NearSingular { distance: f64 },

    #[error("zero-set branches not separated near {location:?}: {detail}")]
    BranchAmbiguity { location: Vec<f64>, detail: String },

    #[error("test field support reaches the integration box boundary (|phi| = {value:e})")]
    SupportTruncation { value: f64 },

    #[error("anchor is not on the zero set (|p(Q)| = {value:e})")]
    AnchorOffZeroSet { value: f64 },

    #[error("invariant verification failed: {0}")]
    VerificationFailed(String),

    #[error("frequency residual {residual} exceeds classification threshold (N = {frequency})")]
    Unclassifiable { frequency: f64, residual: f64 },

    #[error("zero ball mass at radius {r:e}")]
    ZeroBallMass { r: f64 },

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
