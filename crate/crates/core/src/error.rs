use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene file {0}: {1}")]
    Io(String, #[source] io::Error),
    #[error("malformed scene: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    Validation(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("degenerate object: projected half-height {half_height:e} is below {epsilon:e}")]
    DegenerateObject { half_height: f64, epsilon: f64 },
    #[error("degenerate pose: camera position coincides with its target")]
    DegeneratePose,
    #[error("object {object_id} skipped: {reason}")]
    ObjectSkipped { object_id: u32, reason: String },
    #[error("invalid camera configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("segmentation map and object id must be given together")]
    MismatchedInputs,
    #[error("segmentation map is {seg_w}x{seg_h} but image is {img_w}x{img_h}")]
    SizeMismatch { img_w: u32, img_h: u32, seg_w: u32, seg_h: u32 },
}

/// Transport-level failure talking to a VLM endpoint. Distinct from a BAD verdict.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {0}: {1}")]
    Status(u16, String),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("no scripted response for image {0}")]
    NoScript(String),
}

impl GatewayError {
    /// Whether a retry could plausibly succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Status(code, _) => *code == 429 || *code >= 500,
            GatewayError::Decode(_) | GatewayError::NoScript(_) => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VlmError {
    #[error("unparseable verdict: {0:?}")]
    UnparseableVerdict(String),
    #[error("unparseable caption: {0:?}")]
    UnparseableCaption(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding is empty or has zero norm")]
    ZeroVector,
    #[error("image {id} has no {what}")]
    MissingScore { id: String, what: &'static str },
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("row {0} has zero norm")]
    ZeroVectorRow(usize),
    #[error("cannot select {k} of {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
    #[error("embedding matrix: {0}")]
    Shape(String),
}

#[derive(Debug, Error)]
pub enum EmbeddingFileError {
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] io::Error),
    #[error("malformed embedding header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("embedding payload holds {actual} bytes, header implies {expected}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("header lists {ids} ids but count is {count}")]
    CountMismatch { ids: usize, count: usize },
    #[error("duplicate id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("manifests cover different scenes: {0}")]
    MismatchedScenes(String),
}

impl PipelineError {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        PipelineError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn stage(stage: &str, message: impl ToString) -> Self {
        PipelineError::Stage { stage: stage.to_string(), message: message.to_string() }
    }

    /// Process exit code: 1 for configuration problems, 2 for everything that
    /// fails while a stage is running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}
