use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box (cx={cx}, cy={cy}, w={w}, h={h}): {reason}")]
    InvalidBox {
        cx: f64,
        cy: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid anchor spec: {0}")]
    InvalidAnchorSpec(String),

    #[error("non-finite {what} for boxes {gt:?} and {anchor:?}")]
    NonFinite {
        what: &'static str,
        gt: [f64; 4],
        anchor: [f64; 4],
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("zero ground-truth/anchor pairs: cannot compute normalization parameters")]
    NoPairs,

    #[error("failed to build worker pool: {0}")]
    ThreadPool(String),

    #[error("zero ground truths in annotation set")]
    NoGroundTruths,

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("infeasible synthetic dataset: {0}")]
    Infeasible(String),

    #[error("failed to read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed annotation {id}: {reason}")]
    MalformedAnnotation { id: u64, reason: String },

    #[error("duplicate image id {0}")]
    DuplicateImageId(u64),

    #[error("annotation {annotation_id} references missing image id {image_id}")]
    DanglingImage { annotation_id: u64, image_id: u64 },

    #[error("annotation {annotation_id} references missing category id {category_id}")]
    DanglingCategory {
        annotation_id: u64,
        category_id: u64,
    },
}

impl Error {
    /// True for errors caused by caller-supplied parameters rather than data.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::InvalidAnchorSpec(_) | Error::Infeasible(_)
        )
    }
}
