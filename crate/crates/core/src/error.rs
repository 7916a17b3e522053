use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is in the {found:?} frame, expected {expected:?}")]
    WrongFrame {
        expected: crate::geometry::Frame,
        found: crate::geometry::Frame,
    },

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no consensus: best inlier fraction {fraction:.4} below required {required:.4}")]
    NoConsensus { fraction: f64, required: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("too few samples: {have} available, {need} required")]
    TooFewSamples { have: usize, need: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("noised guidance vector collapsed to zero norm")]
    ZeroVector,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("sample {0} is not in the active set")]
    UnknownSample(usize),

    #[error("loss window holds {have} values, {need} required")]
    WindowNotFull { have: usize, need: usize },

    #[error("prune requested at epoch {epoch}, which is not a pruning epoch")]
    WrongEpoch { epoch: usize },

    #[error("innovation covariance is numerically singular (condition {0:e})")]
    SingularInnovation(f64),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
