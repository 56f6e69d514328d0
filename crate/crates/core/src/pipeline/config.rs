//! TOML pipeline configuration.
//!
//! ```toml
//! scene = "scenes/desk.json"
//! out_dir = "out/desk"
//!
//! [stage.poses]
//! fov_y_deg = 90.0
//!
//! [stage.filter-heuristic]
//! min_brightness = 30.0
//!
//! [stage.filter-vlm]
//! stub = "stub.json"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::camgen::baseline::{BaselineMethod, SpatialSampling};
use crate::camgen::CameraSettings;
use crate::error::PipelineError;
use crate::imgfilter::HeuristicThresholds;
use crate::quality::{QualityThresholds, DEFAULT_CLIP_SCALE};
use crate::vlm::{
    BackoffPolicy, OpenAiGateway, RetryingGateway, ScriptedGateway, VlmGateway, VlmOptions, CAPTION_PROMPT,
    DEFAULT_MODEL, FILTER_PROMPT,
};

use super::stages::BaselineSpec;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub stage: StageConfigs,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct StageConfigs {
    pub poses: PosesConfig,
    pub filter_heuristic: HeuristicThresholds,
    pub filter_vlm: VlmStageConfig,
    pub caption: VlmStageConfig,
    pub score: ScoreConfig,
    pub filter_quality: QualityThresholds,
    pub sample: SampleConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosesConfig {
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
    pub fov_y_deg: f64,
    pub fill_fraction: f64,
    pub width: u32,
    pub height: u32,
    pub min_bbox_diagonal: Option<f64>,
    /// `random_view` or `anchor_sweep`; absent means object-centric.
    pub baseline: Option<String>,
    pub spatial: String,
    pub grid_n: u32,
    pub count: usize,
    pub seed: u64,
}

impl Default for PosesConfig {
    fn default() -> Self {
        let c = CameraSettings::default();
        Self {
            azimuths_deg: c.azimuths_deg,
            elevations_deg: c.elevations_deg,
            fov_y_deg: c.fov_y_deg,
            fill_fraction: c.fill_fraction,
            width: c.width,
            height: c.height,
            min_bbox_diagonal: c.min_bbox_diagonal,
            baseline: None,
            spatial: "uniform".into(),
            grid_n: 4,
            count: 100,
            seed: 0,
        }
    }
}

impl PosesConfig {
    pub fn camera(&self) -> CameraSettings {
        CameraSettings {
            azimuths_deg: self.azimuths_deg.clone(),
            elevations_deg: self.elevations_deg.clone(),
            fov_y_deg: self.fov_y_deg,
            fill_fraction: self.fill_fraction,
            width: self.width,
            height: self.height,
            min_bbox_diagonal: self.min_bbox_diagonal,
        }
    }

    pub fn baseline_spec(&self) -> Result<Option<BaselineSpec>, PipelineError> {
        let Some(m) = &self.baseline else { return Ok(None) };
        let method: BaselineMethod = m.parse().map_err(PipelineError::Config)?;
        let spatial = parse_spatial(&self.spatial, self.grid_n)?;
        Ok(Some(BaselineSpec { method, spatial, count: self.count, seed: self.seed }))
    }
}

pub fn parse_spatial(name: &str, grid_n: u32) -> Result<SpatialSampling, PipelineError> {
    match name {
        "uniform" => Ok(SpatialSampling::Uniform),
        "grid" => Ok(SpatialSampling::Grid(grid_n)),
        other => Err(PipelineError::Config(format!("unknown spatial sampling '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlmStageConfig {
    /// OpenAI-compatible server; the key comes from the environment.
    pub endpoint: Option<String>,
    /// Scripted responses file, used instead of an endpoint.
    pub stub: Option<PathBuf>,
    pub prompt_file: Option<PathBuf>,
    pub max_in_flight: usize,
    pub timeout_secs: f64,
    pub transport_retries: u32,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub semantic_retries: u32,
}

impl Default for VlmStageConfig {
    fn default() -> Self {
        let o = VlmOptions::default();
        Self {
            endpoint: None,
            stub: None,
            prompt_file: None,
            max_in_flight: 8,
            timeout_secs: 60.0,
            transport_retries: 3,
            model: DEFAULT_MODEL.into(),
            max_tokens: o.max_tokens,
            temperature: o.temperature,
            semantic_retries: o.semantic_retries,
        }
    }
}

impl VlmStageConfig {
    pub fn options(&self) -> VlmOptions {
        VlmOptions {
            model_name: self.model.clone(),
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            semantic_retries: self.semantic_retries,
        }
    }

    /// The prompt file's contents, or the bundled default.
    pub fn prompt(&self, default: &str) -> Result<String, PipelineError> {
        match &self.prompt_file {
            Some(p) => std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display()))),
            None => Ok(default.to_string()),
        }
    }

    pub fn filter_prompt(&self) -> Result<String, PipelineError> {
        self.prompt(FILTER_PROMPT)
    }

    pub fn caption_prompt(&self) -> Result<String, PipelineError> {
        self.prompt(CAPTION_PROMPT)
    }

    /// A stub takes precedence over an endpoint. Either way transport errors
    /// are retried; the stub retries without waiting.
    pub fn gateway(&self) -> Result<Box<dyn VlmGateway>, PipelineError> {
        if self.max_in_flight == 0 {
            return Err(PipelineError::Config("max_in_flight must be at least 1".into()));
        }
        if let Some(stub) = &self.stub {
            let g = ScriptedGateway::load(stub)?;
            return Ok(Box::new(RetryingGateway::new(g, BackoffPolicy::immediate(self.transport_retries))));
        }
        if let Some(endpoint) = &self.endpoint {
            if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
                return Err(PipelineError::Config("timeout_secs must be positive".into()));
            }
            let g = OpenAiGateway::from_env(endpoint, Duration::from_secs_f64(self.timeout_secs));
            let policy = BackoffPolicy { max_retries: self.transport_retries, ..BackoffPolicy::default() };
            return Ok(Box::new(RetryingGateway::new(g, policy)));
        }
        Err(PipelineError::Config("no VLM endpoint or stub configured".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub image_emb: Option<PathBuf>,
    pub text_emb: Option<PathBuf>,
    pub aesthetic: Option<PathBuf>,
    pub clip_scale: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { image_emb: None, text_emb: None, aesthetic: None, clip_scale: DEFAULT_CLIP_SCALE }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Embeddings used for diversity; defaults to the score stage's image embeddings.
    pub emb: Option<PathBuf>,
    pub splits: String,
    /// Defaults to every quality-passed image.
    pub total: Option<usize>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { emb: None, splits: "train:0.6,val:0.2,test:0.2".into(), total: None }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Make every relative path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.scene);
        fix(&mut self.out_dir);
        let s = &mut self.stage;
        for v in [&mut s.filter_vlm, &mut s.caption] {
            fix(&mut v.stub);
            fix(&mut v.prompt_file);
        }
        fix(&mut s.score.image_emb);
        fix(&mut s.score.text_emb);
        fix(&mut s.score.aesthetic);
        fix(&mut s.sample.emb);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let s = &self.stage;
        s.poses.camera().to_config().map_err(|e| PipelineError::Config(e.to_string()))?;
        s.poses.baseline_spec()?;
        s.filter_heuristic.validate().map_err(PipelineError::Config)?;
        if !(s.score.clip_scale.is_finite() && s.score.clip_scale > 0.0) {
            return Err(PipelineError::Config("clip_scale must be positive".into()));
        }
        Ok(())
    }
}
