use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure classes shared by every module of the engine.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("ground set of size {n} exceeds the exhaustive-validation limit of {limit}")]
    GroundSetTooLarge { n: usize, limit: usize },

    #[error("subset of size {size} exceeds the enumeration limit of {limit}")]
    SubsetLimit { size: usize, limit: usize },

    #[error("allocation is not a point of the polymatroid: {0}")]
    NotInPolymatroid(String),

    #[error("price update requested with no active buyers")]
    NoActiveBuyers,

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("guard exceeded: {what} = {value} (limit {limit})")]
    GuardExceeded { what: &'static str, value: u128, limit: u128 },

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error ({axiom}): {detail}")]
    Validation { axiom: &'static str, detail: String },

    #[error("unknown fixture: {0}")]
    UnknownFixture(String),

    #[error("instance generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("price clock stalled at {0}")]
    ClockStalled(String),
}
