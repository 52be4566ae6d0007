//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variant name {name:?}: {reason}")]
    InvalidVariantName { name: String, reason: &'static str },

    #[error("unknown variant {0:?}")]
    UnknownVariant(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid schedule configuration: {0}")]
    InvalidConfig(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("exact p-value requires tie-free data; use the normal approximation")]
    ExactRequiresNoTies,

    #[error(
        "pooled sample of {0} is too large for the exact method; use the normal approximation"
    )]
    ExactTooLarge(usize),

    #[error("effect size {0} outside [0, 1]")]
    EffectSizeOutOfRange(f64),

    #[error("series of length {len} is too short (minimum {min})")]
    SeriesTooShort { len: usize, min: usize },

    #[error("invalid device parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("battery discharged after {runs} runs")]
    Discharged { runs: usize },

    #[error("battery at {level:.1}% is below the {floor:.1}% floor before slot {slot}")]
    BatteryFloor { slot: usize, level: f64, floor: f64 },

    #[error("run() called before any setup()")]
    RunBeforeSetup,

    #[error("corpus exhausted: {0}")]
    CorpusExhausted(String),

    #[error("failed to spawn {command:?}: {source}")]
    CommandSpawn {
        command: String,
        source: std::io::Error,
    },

    #[error("command {command:?} exited with {status}: {output}")]
    CommandFailed {
        command: String,
        status: String,
        output: String,
    },

    #[error("command {command:?} timed out after {timeout_s} s")]
    CommandTimeout { command: String, timeout_s: f64 },

    #[error("pattern {pattern:?} not found in command output: {output:?}")]
    ParseEnergy { pattern: String, output: String },

    #[error("corpus structure mismatch: expected {expected}, got {actual}")]
    StructureMismatch { expected: String, actual: String },

    #[error("matrix labels do not match: {0}")]
    LabelMismatch(String),

    #[error("baseline variant {0:?} missing from campaign")]
    MissingBaseline(String),

    #[error("{path}:{line}: {message}")]
    ParseFile {
        path: String,
        line: usize,
        message: String,
    },

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Parse error helper carrying a 1-based line number.
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::ParseFile {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
