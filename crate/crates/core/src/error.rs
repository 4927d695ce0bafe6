use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid track: {0}")]
    InvalidTrack(String),
    #[error("nearest-point projection is ambiguous at station {station}")]
    AmbiguousProjection { station: usize },
    #[error("line leaves the lateral band at station {station} (offset {offset:.3} m)")]
    OutOfBand { station: usize, offset: f64 },
    #[error("invalid basis configuration: {0}")]
    InvalidBasis(String),
    #[error("normal equations are singular (set a positive ridge factor)")]
    SingularSystem,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance is not positive semi-definite")]
    NotPsd,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("insufficient demonstrations for track {0}")]
    InsufficientDemos(String),
    #[error("demonstration library is empty")]
    EmptyLibrary,
    #[error("line has zero length")]
    DegenerateLine,
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("integration step {0} s outside (0, 0.02]")]
    InvalidTimeStep(f64),
    #[error("numerical blow-up in vehicle integration")]
    NumericalBlowup,
    #[error("vehicle could not be localized on the target line")]
    LocalizationLost,
    #[error("target speed floor reached at corner {corner}")]
    FloorReached { corner: usize },
    #[error("corner {corner} could not be resolved")]
    Unresolvable { corner: usize },
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: u64,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
