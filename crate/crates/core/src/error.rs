use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed point data: {0}")]
    MalformedData(String),

    #[error("LAZ input requires a registered decoder")]
    LazNotSupported,

    #[error("index range {first}..{end} out of bounds for {count} points")]
    IndexOutOfRange { first: u64, end: u64, count: u64 },

    #[error("operation cancelled")]
    Cancelled,

    #[error("disk full: {0}")]
    DiskFull(io::Error),

    #[error("inconsistent chunks: {0}")]
    InconsistentChunks(String),

    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),

    #[error("dimension mismatch: framebuffer {fb:?}, background {background:?}")]
    DimensionMismatch { fb: (u32, u32), background: (u32, u32) },

    #[error("node {0} is not resident")]
    NodeNotResident(String),

    #[error("queue closed")]
    QueueClosed,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("a build is already running")]
    BuildInProgress,

    #[error("malformed octree directory: {0}")]
    MalformedOctree(String),

    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        if err.kind() == io::ErrorKind::StorageFull {
            Error::DiskFull(err)
        } else {
            Error::Io(err)
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::MalformedOctree(err.to_string())
    }
}

impl Error {
    /// Process exit code for command-line use: 2 for input that cannot be
    /// read as a point cloud, 130 for interruption, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnsupportedFormat(_)
            | Error::MalformedHeader(_)
            | Error::LazNotSupported => 2,
            Error::Cancelled => 130,
            _ => 3,
        }
    }
}
