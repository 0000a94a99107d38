use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no reviews")]
    EmptyInput,

    #[error("review by {reviewer} on {product} has rating {rating}, outside scale [{min}, {max}]")]
    RatingOutOfScale {
        reviewer: String,
        product: String,
        rating: i32,
        min: i32,
        max: i32,
    },

    #[error("invalid rating scale [{min}, {max}]")]
    InvalidRatingScale { min: i32, max: i32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("{path}: {rejected} of {read} rows rejected (more than 10%); first: {first}")]
    TooManyRejected {
        path: PathBuf,
        read: u64,
        rejected: u64,
        first: String,
    },

    #[error("conflicting labels for reviewer {0}")]
    ConflictingLabel(String),

    #[error("group needs at least 2 reviewers and 1 product, got {members} and {targets}")]
    GroupTooSmall { members: usize, targets: usize },

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("graph has no edges")]
    NoEdges,

    #[error("unknown product {0}")]
    UnknownProduct(String),

    #[error("unknown reviewer {0}")]
    UnknownReviewer(String),

    #[error("reviewers {0} and {1} did not both review {2}")]
    NotCoReviewers(String, String, String),

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("no embedding vector for reviewer {0}")]
    MissingEmbedding(String),

    #[error("no fraud labels available")]
    NoLabels,

    #[error("insufficient pairs: {0}")]
    InsufficientPairs(String),

    #[error("invalid campaign spec: {0}")]
    SpecInvalid(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
