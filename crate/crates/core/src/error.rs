use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box has non-finite coordinates {0:?}")]
    NonFinite([f64; 4]),
    #[error("box coordinates out of order {0:?} (expected x_min <= x_max, y_min <= y_max)")]
    Inverted([f64; 4]),
    #[error("invalid crop: side {crop_side}, output size {output_size}")]
    InvalidCrop { crop_side: f64, output_size: u32 },
    #[error("undefined overlap: both boxes are degenerate")]
    UndefinedOverlap,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("GIoU value {0} outside [-1, 1]")]
    GiouOutOfRange(f64),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("group of size {0} is too small for advantage normalization (need >= 2)")]
    GroupTooSmall(usize),
    #[error("distribution support mismatch: {0} vs {1} outcomes")]
    SupportMismatch(usize, usize),
    #[error("reference distribution has zero mass at outcome {0} where p > 0")]
    ZeroReferenceMass(usize),
    #[error("invalid GRPO config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file {}", .0.display())]
    Missing(PathBuf),
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("sequence {seq}: {frames} frames but {annotations} annotations")]
    CountMismatch {
        seq: String,
        frames: usize,
        annotations: usize,
    },
    #[error("sequence {seq} has {usable} usable frames (need >= 2)")]
    NotEnoughFrames { seq: String, usable: usize },
    #[error("image error at {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("invalid sample config: {0}")]
    InvalidConfig(String),
    #[error("degenerate ground truth after clamping")]
    DegenerateTarget,
    #[error("JSON error at {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures talking to a policy backend.
#[derive(Debug, Clone, Error)]
pub enum BackendError {
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("degenerate initial box {0:?}")]
    DegenerateInit([f64; 4]),
    #[error("grounding failed, raw response: {raw}")]
    GroundingFailed { raw: String },
    #[error("empty target description")]
    EmptyDescription,
    #[error("frame {frame}: {source}")]
    Backend {
        frame: usize,
        #[source]
        source: BackendError,
    },
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no sequences to evaluate")]
    Empty,
    #[error("sequence {seq}: {predictions} predictions, {ground_truth} ground-truth boxes, {absent} absence flags")]
    LengthMismatch {
        seq: String,
        predictions: usize,
        ground_truth: usize,
        absent: usize,
    },
    #[error("sequence {seq}: latency count {latencies} does not match {frames} frames")]
    LatencyMismatch {
        seq: String,
        latencies: usize,
        frames: usize,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no ground truth for predicted sequence {0}")]
    UnknownSequence(String),
    #[error("zip error: {0}")]
    Zip(String),
}

impl EvalError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
}
