use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bin edges must be strictly ascending (violation at index {index})")]
    NonMonotonicEdges { index: usize },
    #[error("outer bin edges must be -inf and +inf")]
    MissingTailBins,
    #[error("bin edges must be symmetric about zero to reflect a tomogram")]
    AsymmetricEdges,
    #[error("squeezing {sq_db} dB exceeds antisqueezing {antisq_db} dB")]
    InvertedOrdering { sq_db: f64, antisq_db: f64 },
    #[error("invalid Gaussian state: {0}")]
    InvalidState(String),
    #[error("Fock cutoff {dim} too small: tail probability {tail:.3e} exceeds 1e-6")]
    TruncationTooSmall { dim: usize, tail: f64 },
    #[error("density matrix invariant violated: {0}")]
    InvariantViolation(String),
    #[error("Wigner grid needs at least 32 points per axis, got {0}")]
    GridTooCoarse(usize),
    #[error("no grid value crosses the contour level")]
    NoContour,
    #[error("bad channel parameters: {0}")]
    BadParameters(String),
    #[error("no transmission bin retained {min_samples} or more samples")]
    EmptyAfterDiscard { min_samples: usize },
    #[error("variance must be positive (got {0})")]
    NonPositiveVariance(f64),
    #[error("fit design is degenerate: {0}")]
    DegenerateDesign(String),
    #[error("no samples for measurement angle {angle_deg} deg")]
    EmptyAngleGroup { angle_deg: f64 },
    #[error("tomogram angle {angle_deg} deg lies outside [0, 90] deg")]
    AngleOutOfRange { angle_deg: f64 },
    #[error("bin {bin} of angle {angle_deg} deg has data but zero model probability; raise the Fock cutoff")]
    ZeroProbabilityBin { angle_deg: f64, bin: usize },
    #[error("maximum likelihood did not converge in {iterations} iterations (last gain {last_gain:.3e})")]
    NoConvergence { iterations: usize, last_gain: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::InvalidInput(e.to_string()),
        }
    }
}
