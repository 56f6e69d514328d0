//! Full pipeline with per-stage files. A stage whose output file already
//! exists is skipped, so an interrupted run resumes where it stopped.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::PipelineConfig;
use super::manifest::{read_manifest, write_atomic, write_manifest, ManifestRecord};
use super::stages::{
    baseline_poses, caption_stage, heuristic_stage, object_poses, quality_stage, render_stage, sample_stage,
    score_stage, vlm_stage, write_splits, ScoreInputs, StageReport, VlmStage,
};
use super::stats::{format_stats_table, scene_stats, SceneStats};
use crate::camgen::export::{read_poses, write_poses, PoseRecord};
use crate::embfile::{read_aesthetic, read_embeddings};
use crate::error::PipelineError;
use crate::scene::load_scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RunStage {
    Poses,
    Render,
    FilterHeuristic,
    FilterVlm,
    Caption,
    Score,
    FilterQuality,
    Sample,
}

impl RunStage {
    pub const ALL: [RunStage; 8] = [
        RunStage::Poses,
        RunStage::Render,
        RunStage::FilterHeuristic,
        RunStage::FilterVlm,
        RunStage::Caption,
        RunStage::Score,
        RunStage::FilterQuality,
        RunStage::Sample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RunStage::Poses => "poses",
            RunStage::Render => "render",
            RunStage::FilterHeuristic => "filter-heuristic",
            RunStage::FilterVlm => "filter-vlm",
            RunStage::Caption => "caption",
            RunStage::Score => "score",
            RunStage::FilterQuality => "filter-quality",
            RunStage::Sample => "sample",
        }
    }
}

impl fmt::Display for RunStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunStage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        RunStage::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

/// Where a run keeps its files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn poses(&self) -> PathBuf {
        self.root.join("poses.jsonl")
    }

    pub fn images(&self) -> PathBuf {
        self.root.join("images")
    }

    /// Manifest written by `stage` (not defined for poses or sample).
    pub fn manifest(&self, stage: RunStage) -> PathBuf {
        self.root.join(format!("{stage}.jsonl"))
    }

    pub fn splits(&self) -> PathBuf {
        self.root.join("splits")
    }

    pub fn stats_json(&self) -> PathBuf {
        self.root.join("stats.json")
    }

    pub fn stats_txt(&self) -> PathBuf {
        self.root.join("stats.txt")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// `None` for stages reused from an earlier run.
    pub reports: Vec<(RunStage, Option<StageReport>)>,
    pub stats: Vec<SceneStats>,
    /// Latest manifest written or reused.
    pub manifest: PathBuf,
}

fn write_poses_atomic(path: &Path, poses: &[PoseRecord]) -> Result<(), PipelineError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_poses(&tmp, poses)?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

/// Validate what the requested stages need before doing any work.
fn preflight(cfg: &PipelineConfig, until: RunStage) -> Result<(), PipelineError> {
    cfg.validate()?;
    if cfg.scene.is_none() {
        return Err(PipelineError::Config("no scene given".into()));
    }
    if cfg.out_dir.is_none() {
        return Err(PipelineError::Config("no out_dir given".into()));
    }
    let s = &cfg.stage;
    if until >= RunStage::FilterVlm {
        s.filter_vlm.gateway()?;
        s.filter_vlm.filter_prompt()?;
    }
    if until >= RunStage::Caption {
        s.caption.gateway()?;
        s.caption.caption_prompt()?;
    }
    if until >= RunStage::Score
        && (s.score.image_emb.is_none() || s.score.text_emb.is_none() || s.score.aesthetic.is_none())
    {
        return Err(PipelineError::Config("score stage needs image_emb, text_emb and aesthetic".into()));
    }
    Ok(())
}

/// Run every stage up to and including `until` (default: all).
pub fn run_pipeline(cfg: &PipelineConfig, until: Option<RunStage>) -> Result<RunSummary, PipelineError> {
    let until = until.unwrap_or(RunStage::Sample);
    preflight(cfg, until)?;
    let scene = load_scene(cfg.scene.as_ref().expect("checked")).map_err(|e| PipelineError::Config(e.to_string()))?;
    let layout = RunLayout::new(cfg.out_dir.as_ref().expect("checked"));
    fs::create_dir_all(&layout.root).map_err(|e| PipelineError::io(&layout.root, e))?;
    let images = layout.images();
    let s = &cfg.stage;
    let mut reports = Vec::new();

    let poses_path = layout.poses();
    if poses_path.exists() {
        reports.push((RunStage::Poses, None));
    } else {
        let poses = match s.poses.baseline_spec()? {
            Some(spec) => baseline_poses(&scene, &spec, &s.poses.camera())?,
            None => object_poses(&scene, &s.poses.camera())?,
        };
        write_poses_atomic(&poses_path, &poses)?;
        log::info!("poses: {} views", poses.len());
        let n = poses.len();
        reports.push((RunStage::Poses, Some(StageReport { processed: n, passed: n, ..Default::default() })));
    }

    let mut manifest_path = poses_path.clone();
    let mut records: Vec<ManifestRecord> = Vec::new();
    for stage in RunStage::ALL.into_iter().filter(|st| *st > RunStage::Poses && *st <= until) {
        if stage == RunStage::Sample {
            break;
        }
        let path = layout.manifest(stage);
        if path.exists() {
            records = read_manifest(&path)?;
            reports.push((stage, None));
            manifest_path = path;
            continue;
        }
        let report = match stage {
            RunStage::Render => {
                records = render_stage(&scene, &read_poses(&poses_path)?, &images)?;
                let n = records.len();
                let ok = records.iter().filter(|r| r.status.render.is_passed()).count();
                StageReport { processed: n, passed: ok, errors: n - ok, ..Default::default() }
            }
            RunStage::FilterHeuristic => heuristic_stage(&mut records, &images, Some(&images), &s.filter_heuristic),
            RunStage::FilterVlm => {
                let g = s.filter_vlm.gateway()?;
                let prompt = s.filter_vlm.filter_prompt()?;
                let options = s.filter_vlm.options();
                let vlm = VlmStage {
                    gateway: &*g,
                    prompt: &prompt,
                    options: &options,
                    max_in_flight: s.filter_vlm.max_in_flight,
                };
                vlm_stage(&mut records, &images, &vlm)
            }
            RunStage::Caption => {
                let g = s.caption.gateway()?;
                let prompt = s.caption.caption_prompt()?;
                let options = s.caption.options();
                let vlm = VlmStage {
                    gateway: &*g,
                    prompt: &prompt,
                    options: &options,
                    max_in_flight: s.caption.max_in_flight,
                };
                caption_stage(&mut records, &images, &vlm)
            }
            RunStage::Score => {
                let load = |p: &Option<PathBuf>| {
                    read_embeddings(p.as_ref().expect("checked")).map_err(|e| PipelineError::stage("score", e))
                };
                let image_emb = load(&s.score.image_emb)?;
                let text_emb = load(&s.score.text_emb)?;
                let aesthetic = read_aesthetic(s.score.aesthetic.as_ref().expect("checked"))
                    .map_err(|e| PipelineError::stage("score", e))?;
                let inputs = ScoreInputs {
                    image_emb: &image_emb,
                    text_emb: &text_emb,
                    aesthetic: &aesthetic,
                    clip_scale: s.score.clip_scale,
                };
                score_stage(&mut records, &inputs)
            }
            RunStage::FilterQuality => quality_stage(&mut records, &s.filter_quality),
            RunStage::Poses | RunStage::Sample => unreachable!("handled outside the loop"),
        };
        log::info!("{stage}: {report:?}");
        write_manifest(&path, &records)?;
        reports.push((stage, Some(report)));
        manifest_path = path;
    }

    if until == RunStage::Sample {
        let dir = layout.splits();
        if dir.exists() {
            reports.push((RunStage::Sample, None));
        } else {
            let emb_path = s.sample.emb.as_ref().or(s.score.image_emb.as_ref()).expect("checked in preflight");
            let emb = read_embeddings(emb_path).map_err(|e| PipelineError::stage("sample", e))?;
            let splits = sample_stage(&records, &emb, &s.sample.splits, s.sample.total)?;
            // Build in a scratch directory so a partial split set never looks complete.
            let tmp = layout.root.join("splits.tmp");
            if tmp.exists() {
                fs::remove_dir_all(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
            }
            write_splits(&tmp, &splits)?;
            fs::rename(&tmp, &dir).map_err(|e| PipelineError::io(&dir, e))?;
            let n: usize = splits.iter().map(|s| s.records.len()).sum();
            reports.push((RunStage::Sample, Some(StageReport { processed: n, passed: n, ..Default::default() })));
        }
    }

    let stats = scene_stats(&records);
    if !records.is_empty() {
        let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
        write_atomic(&layout.stats_json(), json.as_bytes())?;
        write_atomic(&layout.stats_txt(), format_stats_table(&stats).as_bytes())?;
    }
    Ok(RunSummary { reports, stats, manifest: manifest_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::fixtures::desk_config;
    use crate::pipeline::manifest::StageStatus;
    use crate::vlm::{ScriptedGateway, VlmOptions, FILTER_PROMPT};

    #[test]
    fn run_until_then_resume_matches_a_single_run() {
        let tmp = tempfile::tempdir().unwrap();
        let inputs = tmp.path().join("inputs");
        let staged = tmp.path().join("staged");
        let cfg = PipelineConfig::load(desk_config(&inputs, &staged)).unwrap();

        let first = run_pipeline(&cfg, Some(RunStage::FilterVlm)).unwrap();
        let layout = RunLayout::new(&staged);
        assert!(layout.manifest(RunStage::FilterVlm).exists());
        assert!(!layout.manifest(RunStage::Caption).exists());
        assert!(first.reports.iter().all(|(_, r)| r.is_some()));

        let resumed = run_pipeline(&cfg, None).unwrap();
        let reused: Vec<RunStage> = resumed.reports.iter().filter(|(_, r)| r.is_none()).map(|(s, _)| *s).collect();
        assert_eq!(reused, [RunStage::Poses, RunStage::Render, RunStage::FilterHeuristic, RunStage::FilterVlm]);

        let direct = tmp.path().join("direct");
        let cfg = PipelineConfig::load(desk_config(&inputs, &direct)).unwrap();
        run_pipeline(&cfg, None).unwrap();
        for f in ["filter-quality.jsonl", "splits/train.jsonl", "splits/val.jsonl", "splits/test.jsonl"] {
            assert_eq!(fs::read(staged.join(f)).unwrap(), fs::read(direct.join(f)).unwrap(), "{f}");
        }

        // A finished run is a no-op.
        let again = run_pipeline(&cfg, None).unwrap();
        assert!(again.reports.iter().all(|(_, r)| r.is_none()));
        assert!(!direct.join("splits.tmp").exists());
    }

    #[test]
    fn stages_are_idempotent_on_their_output() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("run");
        let cfg = PipelineConfig::load(desk_config(&tmp.path().join("inputs"), &out)).unwrap();
        run_pipeline(&cfg, Some(RunStage::FilterVlm)).unwrap();
        let layout = RunLayout::new(&out);
        let images = layout.images();

        let mut records = read_manifest(layout.manifest(RunStage::FilterHeuristic)).unwrap();
        let before = records.clone();
        let report = heuristic_stage(&mut records, &images, Some(&images), &Default::default());
        assert_eq!(report.processed, 0);
        assert_eq!(records, before);

        let mut records = read_manifest(layout.manifest(RunStage::FilterVlm)).unwrap();
        let before = records.clone();
        let gateway = ScriptedGateway::uniform("BAD: would flip every verdict");
        let opts = VlmOptions::default();
        let vlm = VlmStage { gateway: &gateway, prompt: FILTER_PROMPT, options: &opts, max_in_flight: 4 };
        assert_eq!(vlm_stage(&mut records, &images, &vlm).processed, 0);
        assert_eq!(records, before);
    }

    #[test]
    fn flaky_stub_reply_is_retried_and_accepted() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("run");
        let cfg = PipelineConfig::load(desk_config(&tmp.path().join("inputs"), &out)).unwrap();
        run_pipeline(&cfg, Some(RunStage::FilterVlm)).unwrap();
        let records = read_manifest(RunLayout::new(&out).manifest(RunStage::FilterVlm)).unwrap();
        let r = records.iter().find(|r| r.image_id == "desk/3/2").unwrap();
        assert!(r.status.heuristic.is_passed() && r.status.vlm.is_passed());
        assert_eq!(r.vlm_reason.as_deref(), Some("recognizable object after retry"));
        let bad: Vec<_> =
            records.iter().filter(|r| r.vlm_reason.as_deref() == Some("extreme close-up of surface")).collect();
        assert!(!bad.is_empty());
        assert!(bad.iter().all(|r| matches!(&r.status.vlm, StageStatus::Rejected { reasons } if reasons == &["bad"])));
    }

    #[test]
    fn missing_score_inputs_fail_before_any_work() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("run");
        let mut cfg = PipelineConfig::load(desk_config(&tmp.path().join("inputs"), &out)).unwrap();
        cfg.stage.score.aesthetic = None;
        assert!(matches!(run_pipeline(&cfg, None), Err(PipelineError::Config(_))));
        assert!(!out.exists());
        // Stopping before the score stage does not need them.
        run_pipeline(&cfg, Some(RunStage::Caption)).unwrap();
    }
}
