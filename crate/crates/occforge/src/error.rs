use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("degenerate scene: depth produced no occupied voxels")]
    DegenerateScene,
    #[error("voxel index {0:?} out of bounds for grid dims {1:?}")]
    IndexOutOfBounds([usize; 3], [usize; 3]),
    #[error("duplicate voxel index {0} in visible set")]
    DuplicateIndex(usize),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
