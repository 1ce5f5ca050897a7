use thiserror::Error;

#[derive(Debug, Error)]
pub enum LagomError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("unsupported dimension {0} (expected 1..=3)")]
    UnsupportedDimension(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration too large: about {0} cubes")]
    EnumerationTooLarge(u128),

    #[error("grid too large: {0} cells")]
    GridTooLarge(u128),

    #[error("cube {0} is not aligned to the grid")]
    UnalignedCube(String),

    #[error("cube {0} lies outside the grid box")]
    CubeOutsideBox(String),

    #[error("grid specifications differ")]
    SpecMismatch,

    #[error("grid box too small: {0}")]
    BoxTooSmall(String),

    #[error("operator table would need {0} entries, over the memory guard")]
    MemoryGuard(u128),

    #[error("size ordering violated: {0}")]
    SizeOrdering(String),

    #[error("atom violates its hypotheses: {0}")]
    AtomViolation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("norm iteration did not converge after {0} steps")]
    NonConvergence(usize),

    #[error("degenerate sweep: all values below {0:e}")]
    DegenerateSweep(f64),

    #[error("empty family")]
    EmptyFamily,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LagomError>;
