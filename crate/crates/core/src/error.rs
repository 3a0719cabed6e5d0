use crate::scene::VoxelCoord;

/// Crate-wide error type. Variants carry enough context to name the first
/// offending anchor, level, or byte offset in reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("level {level} out of range [1, {max}]")]
    LevelOutOfRange { level: u32, max: u32 },

    #[error("position ({0}, {1}, {2}) lies outside the bounding cube")]
    OutsideBounds(f64, f64, f64),

    #[error("point cloud is empty")]
    EmptyPointCloud,

    #[error("voxel coordinate {0} exceeds the grid bounds of its level")]
    CoordOutOfBounds(VoxelCoord),

    #[error("anchor {child} has no parent anchor at {parent}")]
    MissingParent { child: VoxelCoord, parent: VoxelCoord },

    #[error("anchor {0} still has children and cannot be removed")]
    HasChildren(VoxelCoord),

    #[error("anchor {0} occurs twice in the stream")]
    DuplicateAnchor(VoxelCoord),

    #[error("level-1 anchors have no parent")]
    NoParentAtRoot,

    #[error("stats carry {got} anchors but the store holds {expected}")]
    StatsMismatch { expected: usize, got: usize },

    #[error("gradient row count {got} does not match {expected} offsets per anchor")]
    StatsRowMismatch { expected: usize, got: usize },

    #[error("MLP weight shapes do not match the configured architecture: {0}")]
    ShapeMismatch(String),

    #[error("quantized symbol {symbol} for channel {channel} exceeds the 16-bit symbol range")]
    SymbolOverflow { channel: usize, symbol: i64 },

    #[error("parent index overflows 20 bits while encoding level {level}")]
    ParentIndexOverflow { level: u32 },

    #[error("position must lie in the unit cube, got ({0}, {1}, {2})")]
    OutsideUnitCube(f64, f64, f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("stream truncated while reading {0}")]
    Truncated(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { what, detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
