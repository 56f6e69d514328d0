//! Orchestration: manifests, stages, full runs, statistics and the camera
//! placement ablation.

pub mod ablation;
pub mod config;
#[cfg(test)]
mod fixtures;
pub mod manifest;
pub mod run;
pub mod stages;
pub mod stats;

pub use ablation::{ablation_report, format_ablation_table, run_ablation, AblationReport, MethodRates};
pub use config::PipelineConfig;
pub use manifest::{read_manifest, write_manifest, ManifestRecord, Stage, StageStatus, StageStatuses};
pub use run::{run_pipeline, RunLayout, RunStage, RunSummary};
pub use stats::{format_stats_table, scene_stats, MeanStd, SceneStats};
