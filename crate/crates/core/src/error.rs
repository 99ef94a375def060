use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("coupling ({i}, {j}) spans {} positions, exceeding k = {k}", j - i)]
    NotAChain { i: usize, j: usize, k: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("duplicate coefficient entry {0}")]
    DuplicateEntry(String),

    #[error("malformed instance: {0}")]
    Parse(String),

    #[error("capacity exceeded: {what} needs {needed} states, cap is {cap}")]
    Capacity {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("numeric {kind} at {step}")]
    NumericFault { kind: FaultKind, step: String },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    Underflow,
    Overflow,
    NaN,
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FaultKind::Underflow => "underflow",
            FaultKind::Overflow => "overflow",
            FaultKind::NaN => "nan",
        })
    }
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind_tag(&self) -> &'static str {
        match self {
            Error::InvalidDimensions(_) => "invalid-dimensions",
            Error::InvalidAssignment(_) => "invalid-assignment",
            Error::NotAChain { .. } => "not-a-chain",
            Error::IndexOutOfRange(_) => "index-out-of-range",
            Error::DuplicateEntry(_) => "duplicate-entry",
            Error::Parse(_) => "parse",
            Error::Capacity { .. } => "capacity",
            Error::NumericFault { .. } => "numeric-fault",
            Error::InvalidConfig(_) => "invalid-config",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
