use crate::model::KernelProperty;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected property combination: {0:?} + {1:?}")]
    RejectedCombination(KernelProperty, KernelProperty),
    #[error("property set must contain 1 or 2 properties, got {0}")]
    BadPropertyCount(usize),
    #[error("image dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("label {label} not valid for {branch} branch")]
    BranchMismatch { label: String, branch: String },
    #[error("bounding box [{x}, {y}, {w}, {h}] outside image bounds {iw}x{ih}")]
    OutOfBoundsBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        iw: u32,
        ih: u32,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("missing calibration sample for type {0:?}")]
    MissingType(KernelProperty),
    #[error("non-positive calibration input for type {0:?}")]
    NonpositiveInput(KernelProperty),
    #[error("kernel has non-positive area")]
    NonpositiveArea,
    #[error("density tables carry different scale tags: {0:?} vs {1:?}")]
    ScaleTagMismatch(String, String),
    #[error("scene placement failed after {attempts} attempts ({placed} of {requested} kernels placed)")]
    PlacementFailure {
        attempts: usize,
        placed: usize,
        requested: usize,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
