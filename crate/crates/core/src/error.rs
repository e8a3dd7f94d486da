use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("hierarchy conflict for `{label}`: {reason}")]
    HierarchyConflict { label: String, reason: String },

    #[error("unknown leaf `{0}`")]
    UnknownLeaf(String),

    #[error("interval [{low}, {high}] outside domain [{lower}, {upper}]")]
    DomainViolation {
        low: f64,
        high: f64,
        lower: f64,
        upper: f64,
    },

    #[error("no generalization rules installed")]
    NoRules,

    #[error("tuple rejected: {0}")]
    InvalidTuple(String),
}

impl Error {
    pub(crate) fn conflict(label: &str, reason: impl Into<String>) -> Self {
        Error::HierarchyConflict {
            label: label.to_owned(),
            reason: reason.into(),
        }
    }
}
