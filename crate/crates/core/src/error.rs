use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duplicate target wire {0}")]
    DuplicateTarget(usize),

    #[error("wire {wire} out of range for a {count}-qubit register")]
    WireOutOfRange { wire: usize, count: usize },

    #[error("invalid register: {0}")]
    InvalidRegister(String),

    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),

    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),

    #[error("operation requires a pure state")]
    RequiresPure,

    #[error("forced outcome {outcome} has probability {probability:.3e}")]
    ZeroProbabilityOutcome { outcome: u8, probability: f64 },

    #[error("keep set must be non-empty")]
    EmptyKeepSet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("off-axis field must lie in the x-z plane (By = {0})")]
    FieldNotInXzPlane(f64),

    #[error("precession frequencies are degenerate (|w+| = |w-|)")]
    DegenerateResonance,

    #[error("noise trajectory covers {covered:.3e} s but {required:.3e} s were requested")]
    TrajectoryTooShort { covered: f64, required: f64 },

    #[error("gate library is missing {0}")]
    MissingGate(String),

    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("gate synthesis failed at every candidate: {0}")]
    SynthesisFailed(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
