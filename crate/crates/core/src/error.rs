use std::path::PathBuf;

/// Errors produced by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("voxel grids differ in resolution or bounds")]
    GridMismatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad shape spec: {0}")]
    BadSpec(String),
    #[error("cannot read {path}: {reason}")]
    FileError { path: PathBuf, reason: String },
    #[error("no point projects inside the view")]
    EmptyView,
    #[error("data error: {0}")]
    DataError(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
