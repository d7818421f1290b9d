use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown {kind} `{name}`")]
    UnknownIdentifier { kind: &'static str, name: String },

    #[error("{kind} index {index} out of range (size {size})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("realization {realization} has zero marginal probability")]
    ZeroMarginal { realization: usize },

    #[error(
        "student {student} is indifferent between programs {first} and {second} \
         after realization {realization} (gap {gap:.3e})"
    )]
    Tie {
        student: usize,
        realization: usize,
        first: usize,
        second: usize,
        gap: f64,
    },

    #[error("empty choice set: the student is unmatched")]
    EmptyChoiceSet,

    #[error("{what} = {value} is out of range")]
    OutOfRange { what: String, value: f64 },

    #[error("joint support of {size} outcomes exceeds cap {cap}")]
    JointTooLarge { size: u128, cap: usize },

    #[error("enumeration of {count} cutoffs exceeds cap {cap}")]
    TooLargeForEnumeration { count: u128, cap: u128 },

    #[error("fixed-point iteration did not converge in {sweeps} sweeps (last step {residual:.3e})")]
    NonConvergence {
        sweeps: usize,
        residual: f64,
        trajectory: Vec<Vec<f64>>,
    },

    #[error("cutoff does not clear the market: {0}")]
    NotMarketClearing(String),

    #[error("cutoffs are not ordered coordinate-wise")]
    IncomparableCutoffs,

    #[error("instance has no program utilities")]
    MissingProgramUtilities,

    #[error("programs do not share a common priority order")]
    PrioritiesNotCommon,

    #[error("instance failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scenario field `{field}`: {message}")]
    Scenario { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            field: field.into(),
            message: message.into(),
        }
    }
}
