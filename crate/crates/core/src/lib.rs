//! Dataset curation for rendered image-caption pairs.
//!
//! The pipeline places cameras around every object of a 3D scene, renders the
//! views, filters them with cheap image statistics and a vision-language
//! model, captions the survivors, gates them on CLIPScore and aesthetic score,
//! and finally picks diverse train/val/test splits by farthest point sampling.

pub mod camgen;
pub mod embfile;
pub mod error;
pub mod geom;
pub mod imgfilter;
pub mod pipeline;
pub mod procedural;
pub mod quality;
pub mod render;
pub mod sampler;
pub mod scene;
pub mod vlm;

pub use camgen::{CameraConfig, CameraPose, CameraSettings};
pub use error::{
    CameraError, EmbeddingFileError, FilterError, GatewayError, PipelineError, QualityError, SamplerError, SceneError,
    VlmError,
};
pub use geom::{Aabb, Vec3};
pub use render::{render_view, RgbImage, SegMap};
pub use scene::{load_scene, save_scene, Scene, SceneObject};
