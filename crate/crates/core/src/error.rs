use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion has zero norm")]
    ZeroNormQuaternion,

    #[error("degenerate rotation: polynomial quaternion sum has norm {norm:.3e}")]
    DegenerateRotation { norm: f64 },

    #[error("scale components must be positive, got ({0}, {1}, {2})")]
    NonPositiveScale(f64, f64, f64),

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("image {0}x{1} is smaller than the {2}x{2} SSIM window")]
    ImageTooSmall(usize, usize, usize),

    #[error("camera has zero-area image ({width}x{height})")]
    ZeroAreaCamera { width: usize, height: usize },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("sample count {requested} exceeds point count {available}")]
    SampleCountExceedsPoints { requested: usize, available: usize },

    #[error("control point set is empty")]
    EmptyControlPoints,

    #[error("neighbor count {k} exceeds control point count {n}")]
    BadNeighborCount { k: usize, n: usize },

    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("loss diverged: {loss:.3e} exceeds {factor:.0}x initial {initial:.3e} for {iters} consecutive iterations")]
    Divergence {
        loss: f64,
        initial: f64,
        factor: f64,
        iters: usize,
    },

    #[error("missing frames: {}", .0.join(", "))]
    MissingFrames(Vec<String>),

    #[error("unpaired frames: {}", .0.join(", "))]
    UnpairedFrames(Vec<String>),

    #[error("parameter vector mismatch: {0}")]
    ParamMismatch(String),

    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image codec error: {0}")]
    Image(String),
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        Error::Image(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
