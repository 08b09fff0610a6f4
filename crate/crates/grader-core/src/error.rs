//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the transform and analysis modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported magic number {0:?} (expected P2 or P5)")]
    UnsupportedMagic(String),

    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),

    #[error("truncated pixel data: expected {expected} values, found {found}")]
    TruncatedPixels { expected: usize, found: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid rng spec: {0}")]
    InvalidRngSpec(String),

    #[error("invalid texture descriptor: {0}")]
    InvalidTexture(String),

    #[error("too many scales: J={requested} needs 2^(J-1)*4 < {limit}")]
    TooManyScales { requested: usize, limit: usize },

    #[error("ridgelet block size {0} is not a power of two")]
    NonPowerOfTwoBlock(usize),

    #[error("ridgelet depth {depth} exceeds maximum {max} for block size {block}")]
    ExcessiveDepth {
        depth: usize,
        max: usize,
        block: usize,
    },

    #[error("image dimensions {width}x{height} not divisible by block size {block}")]
    BlockDivisibility {
        width: usize,
        height: usize,
        block: usize,
    },

    #[error("invalid curvelet config: {0}")]
    BadCurveletConfig(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate coefficients in {band}")]
    DegenerateBand { band: String },

    #[error("{which} sums to zero after clipping")]
    ZeroMarginal { which: String },

    #[error("invalid correspondence-analysis input: {0}")]
    CaInput(String),

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("factor index {k} out of range 1..={kmax}")]
    FactorIndex { k: usize, kmax: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("malformed model file: {0}")]
    ModelParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
