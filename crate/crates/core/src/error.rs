use thiserror::Error;

use crate::data::SegmentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("validation error at record {record}: {message}")]
    Validation { record: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no eligible episodes")]
    NoEligibleEpisodes,

    #[error("segment length {found} does not match horizon {expected}")]
    SegmentLength { expected: usize, found: usize },

    #[error("unknown segment {0:?}")]
    UnknownSegment(SegmentId),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("reconstruction undefined for table embeddings")]
    ReconstructionUndefined,

    #[error("no-comparison triple in quadrilateral batch")]
    AmbiguousInQuadBatch,

    #[error("insufficient labeled data for density estimation")]
    InsufficientLabels,

    #[error("no trainable labels")]
    NoTrainableLabels,

    #[error("no fresh candidates")]
    NoFreshCandidates,

    #[error("empty candidate pool")]
    EmptyPool,

    #[error("ensemble needs at least 2 members, found {0}")]
    EnsembleTooSmall(usize),

    #[error("zero variance")]
    ZeroVariance,

    #[error("environment is not tabular")]
    NotTabular,

    #[error("unknown ticket {0}")]
    UnknownTicket(u64),

    #[error("ticket closed")]
    TicketClosed(u64),

    #[error("timed out waiting for human labels")]
    Timeout,

    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
