use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("label {label} out of range for {class_count} classes")]
    InvalidLabel { label: usize, class_count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CIFAR-10 batch file {file}: {reason}")]
    CifarBatch { file: PathBuf, reason: String },

    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("provenance mismatch: checkpoint was trained on {checkpoint}, plan is {plan}")]
    ProvenanceMismatch { checkpoint: String, plan: String },

    #[error("attack training bucket for class {class} contains only {label} examples")]
    SingleLabelBucket { class: usize, label: &'static str },

    #[error("class {class} has {available} usable members, {needed} required")]
    InsufficientClassMembers {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("record {record} is not a member of the training split")]
    NotAMember { record: usize },

    #[error("record {record} is out of range for a dataset of {len} records")]
    RecordOutOfRange { record: usize, len: usize },

    #[error("no ground-truth membership for record {record} under victim {victim}")]
    UnknownGroundTruth { victim: String, record: usize },

    #[error("not enough initially-positive points; per-class deficit (class, missing): {deficits:?}")]
    InsufficientQualifyingPoints { deficits: Vec<(usize, usize)> },

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Serialization(err.to_string())
    }
}
