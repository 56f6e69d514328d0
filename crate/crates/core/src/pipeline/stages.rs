//! Individual funnel stages. Each one transforms a manifest in place, touches
//! only records that are ready for it, and leaves everything else alone, so
//! re-running a stage on its own output changes nothing.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::manifest::{ManifestRecord, Stage, StageStatus};
use crate::camgen::baseline::{sample_baseline_poses, BaselineCamera, BaselineMethod, SpatialSampling};
use crate::camgen::export::PoseRecord;
use crate::camgen::{place_scene_cameras, CameraSettings};
use crate::embfile::EmbeddingSet;
use crate::error::PipelineError;
use crate::imgfilter::{heuristic_decide, HeuristicThresholds};
use crate::quality::{clip_score_scaled, quality_decide, QualityThresholds, ScoredPair};
use crate::render::{render_view, RgbImage, SegMap};
use crate::sampler::{multi_split_assign, normalize_embeddings, SplitPlan};
use crate::scene::Scene;
use crate::vlm::{bounded_map, caption_image, filter_image, VlmGateway, VlmOptions, UNPARSEABLE};

/// Counts for one stage execution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageReport {
    pub processed: usize,
    pub passed: usize,
    pub rejected: usize,
    pub errors: usize,
}

impl StageReport {
    fn tally(records: &[ManifestRecord], stage: Stage, touched: &[usize]) -> Self {
        let mut r = StageReport { processed: touched.len(), ..Default::default() };
        for &i in touched {
            match records[i].status.get(stage) {
                StageStatus::Passed => r.passed += 1,
                StageStatus::Rejected { .. } => r.rejected += 1,
                StageStatus::Error { .. } => r.errors += 1,
                StageStatus::Pending => {}
            }
        }
        r
    }
}

fn ready(records: &[ManifestRecord], stage: Stage) -> Vec<usize> {
    (0..records.len()).filter(|&i| records[i].ready_for(stage)).collect()
}

/// Object-centric poses for every object, in id order. Objects that cannot be
/// framed are logged and skipped.
pub fn object_poses(scene: &Scene, settings: &CameraSettings) -> Result<Vec<PoseRecord>, PipelineError> {
    let config = settings.to_config().map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut out = Vec::new();
    for placement in place_scene_cameras(scene, &config) {
        match placement {
            Ok(p) => {
                for s in &p.skipped {
                    log::warn!("object {} view {} skipped: {}", p.object_id, s.view_index, s.reason);
                }
                out.extend(p.poses.iter().map(|pose| PoseRecord::from_pose(pose, &scene.name)));
            }
            Err(e) => log::warn!("{e}"),
        }
    }
    Ok(out)
}

/// Baseline knobs for object-agnostic placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    pub spatial: SpatialSampling,
    pub count: usize,
    pub seed: u64,
}

pub fn baseline_poses(
    scene: &Scene,
    spec: &BaselineSpec,
    settings: &CameraSettings,
) -> Result<Vec<PoseRecord>, PipelineError> {
    let camera =
        BaselineCamera { fov_y: settings.fov_y_deg.to_radians(), width: settings.width, height: settings.height };
    let poses =
        sample_baseline_poses(&scene.scene_aabb, &scene.name, spec.method, spec.spatial, spec.count, spec.seed, camera)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(poses.iter().map(|p| PoseRecord::from_pose(p, &scene.name)).collect())
}

/// Render every pose into `images_dir` and start a manifest for it.
pub fn render_stage(
    scene: &Scene,
    poses: &[PoseRecord],
    images_dir: &Path,
) -> Result<Vec<ManifestRecord>, PipelineError> {
    let mut records = Vec::with_capacity(poses.len());
    for pose in poses {
        let mut rec = ManifestRecord::from_pose(pose);
        if rec.scene != scene.name {
            rec.status.render = StageStatus::error(format!("pose belongs to scene '{}'", rec.scene));
            records.push(rec);
            continue;
        }
        match pose.to_pose() {
            Ok(camera) => {
                let (rgb, seg) = render_view(scene, &camera);
                let rgb_path = images_dir.join(&rec.rgb);
                if let Some(dir) = rgb_path.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
                }
                let io =
                    |p: &Path, e: image::ImageError| PipelineError::stage("render", format!("{}: {e}", p.display()));
                rgb.save_png(&rgb_path).map_err(|e| io(&rgb_path, e))?;
                if let Some(s) = &rec.seg {
                    let seg_path = images_dir.join(s);
                    seg.save_png(&seg_path).map_err(|e| io(&seg_path, e))?;
                }
                rec.status.render = StageStatus::Passed;
            }
            Err(msg) => rec.status.render = StageStatus::error(msg),
        }
        records.push(rec);
    }
    Ok(records)
}

/// Zero fill, brightness, variance and dark fraction. The fill check runs for
/// object-centric records when a segmentation directory is given.
pub fn heuristic_stage(
    records: &mut [ManifestRecord],
    images_dir: &Path,
    segmaps_dir: Option<&Path>,
    thresholds: &HeuristicThresholds,
) -> StageReport {
    let todo = ready(records, Stage::Heuristic);
    let results: Vec<_> = todo
        .par_iter()
        .map(|&i| {
            let rec = &records[i];
            let image = RgbImage::load_png(images_dir.join(&rec.rgb)).map_err(|e| format!("{}: {e}", rec.rgb))?;
            let (seg, id) = match (segmaps_dir, rec.object_id, &rec.seg) {
                (Some(dir), Some(obj), Some(seg)) => {
                    let id = u16::try_from(obj).map_err(|_| format!("object id {obj} exceeds 16 bits"))?;
                    (Some(SegMap::load_png(dir.join(seg)).map_err(|e| format!("{seg}: {e}"))?), Some(id))
                }
                _ => (None, None),
            };
            heuristic_decide(&image, seg.as_ref(), id, thresholds).map_err(|e| e.to_string())
        })
        .collect();
    for (&i, res) in todo.iter().zip(results) {
        let rec = &mut records[i];
        rec.status.heuristic = match res {
            Ok(d) => {
                rec.heuristic = Some(d.stats);
                if d.passed {
                    StageStatus::Passed
                } else {
                    StageStatus::rejected(d.reasons.iter().map(|r| r.as_str()))
                }
            }
            Err(msg) => StageStatus::error(msg),
        };
    }
    StageReport::tally(records, Stage::Heuristic, &todo)
}

/// Settings shared by the two model-backed stages.
pub struct VlmStage<'a> {
    pub gateway: &'a dyn VlmGateway,
    pub prompt: &'a str,
    pub options: &'a VlmOptions,
    pub max_in_flight: usize,
}

pub fn vlm_stage(records: &mut [ManifestRecord], images_dir: &Path, vlm: &VlmStage) -> StageReport {
    let todo = ready(records, Stage::Vlm);
    let jobs: Vec<(String, String)> =
        todo.iter().map(|&i| (records[i].image_id.clone(), records[i].rgb.clone())).collect();
    let results = bounded_map(&jobs, vlm.max_in_flight, |(id, rgb)| {
        let image = RgbImage::load_png(images_dir.join(rgb)).map_err(|e| format!("{rgb}: {e}"))?;
        filter_image(vlm.gateway, id, &image, vlm.prompt, vlm.options).map_err(|e| e.to_string())
    });
    for (&i, res) in todo.iter().zip(results) {
        let rec = &mut records[i];
        rec.status.vlm = match res {
            Ok(v) => {
                let status = if v.accepted {
                    StageStatus::Passed
                } else if v.reason == UNPARSEABLE {
                    StageStatus::rejected([UNPARSEABLE])
                } else {
                    StageStatus::rejected(["bad"])
                };
                rec.vlm_reason = Some(v.reason);
                status
            }
            Err(msg) => StageStatus::error(msg),
        };
    }
    StageReport::tally(records, Stage::Vlm, &todo)
}

pub fn caption_stage(records: &mut [ManifestRecord], images_dir: &Path, vlm: &VlmStage) -> StageReport {
    let todo = ready(records, Stage::Caption);
    let jobs: Vec<(String, String)> =
        todo.iter().map(|&i| (records[i].image_id.clone(), records[i].rgb.clone())).collect();
    let results = bounded_map(&jobs, vlm.max_in_flight, |(id, rgb)| {
        let image = RgbImage::load_png(images_dir.join(rgb)).map_err(|e| format!("{rgb}: {e}"))?;
        caption_image(vlm.gateway, id, &image, vlm.prompt, vlm.options).map_err(|e| e.to_string())
    });
    for (&i, res) in todo.iter().zip(results) {
        let rec = &mut records[i];
        rec.status.caption = match res {
            Ok(c) => {
                rec.caption = Some(c.text);
                rec.caption_warning = c.length_warning;
                StageStatus::Passed
            }
            Err(msg) => StageStatus::error(msg),
        };
    }
    StageReport::tally(records, Stage::Caption, &todo)
}

/// External inputs for scoring, keyed by image id.
pub struct ScoreInputs<'a> {
    pub image_emb: &'a EmbeddingSet,
    pub text_emb: &'a EmbeddingSet,
    pub aesthetic: &'a HashMap<String, f64>,
    pub clip_scale: f64,
}

/// Attach CLIPScore and aesthetic score. Missing inputs are per-record errors.
pub fn score_stage(records: &mut [ManifestRecord], inputs: &ScoreInputs) -> StageReport {
    let todo = ready(records, Stage::Score);
    let img_idx = inputs.image_emb.index();
    let txt_idx = inputs.text_emb.index();
    let widen = |row: &[f32]| row.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
    for &i in &todo {
        let rec = &mut records[i];
        let id = rec.image_id.as_str();
        let res = (|| {
            let img = img_idx.get(id).ok_or("no image embedding")?;
            let txt = txt_idx.get(id).ok_or("no text embedding")?;
            let aesthetic = *inputs.aesthetic.get(id).ok_or("no aesthetic score")?;
            let clip = clip_score_scaled(
                &widen(inputs.image_emb.row(*img)),
                &widen(inputs.text_emb.row(*txt)),
                inputs.clip_scale,
            )
            .map_err(|e| e.to_string())?;
            Ok::<_, String>((clip, aesthetic))
        })();
        rec.status.score = match res {
            Ok((clip, aesthetic)) => {
                rec.clip_score = Some(clip);
                rec.aesthetic_score = Some(aesthetic);
                StageStatus::Passed
            }
            Err(msg) => StageStatus::error(msg),
        };
    }
    StageReport::tally(records, Stage::Score, &todo)
}

pub fn quality_stage(records: &mut [ManifestRecord], thresholds: &QualityThresholds) -> StageReport {
    let todo = ready(records, Stage::Quality);
    for &i in &todo {
        let rec = &mut records[i];
        rec.status.quality = match ScoredPair::new(&rec.image_id, rec.clip_score, rec.aesthetic_score) {
            Ok(pair) => {
                let d = quality_decide(&pair, thresholds);
                if d.passed {
                    StageStatus::Passed
                } else {
                    StageStatus::rejected(d.reasons.iter().map(|r| r.as_str()))
                }
            }
            Err(e) => StageStatus::error(e),
        };
    }
    StageReport::tally(records, Stage::Quality, &todo)
}

/// Records of one split, in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutput {
    pub name: String,
    pub records: Vec<ManifestRecord>,
}

/// Multi-split FPS over quality-passed records. `total` defaults to the
/// whole pool.
pub fn sample_stage(
    records: &[ManifestRecord],
    emb: &EmbeddingSet,
    splits: &str,
    total: Option<usize>,
) -> Result<Vec<SplitOutput>, PipelineError> {
    let pool: Vec<&ManifestRecord> = records.iter().filter(|r| r.passed(Stage::Quality)).collect();
    let index = emb.index();
    let mut raw = Vec::with_capacity(pool.len() * emb.dim);
    for r in &pool {
        let row = index
            .get(r.image_id.as_str())
            .ok_or_else(|| PipelineError::stage("sample", format!("no embedding for {}", r.image_id)))?;
        raw.extend(emb.row(*row).iter().map(|&v| f64::from(v)));
    }
    let ids = pool.iter().map(|r| r.image_id.clone()).collect();
    let matrix = normalize_embeddings(ids, emb.dim, &raw).map_err(|e| PipelineError::stage("sample", e))?;
    let plan =
        SplitPlan::parse(splits, total.unwrap_or(pool.len())).map_err(|e| PipelineError::Config(e.to_string()))?;
    let assignment = multi_split_assign(&matrix, &plan).map_err(|e| PipelineError::stage("sample", e))?;
    Ok(assignment
        .names
        .iter()
        .zip(&assignment.members)
        .map(|(name, members)| SplitOutput {
            name: name.clone(),
            records: members
                .iter()
                .enumerate()
                .map(|(rank, &i)| {
                    let mut r = pool[i].clone();
                    r.split = Some(name.clone());
                    r.split_rank = Some(rank);
                    r
                })
                .collect(),
        })
        .collect())
}

pub fn write_splits(dir: &Path, splits: &[SplitOutput]) -> Result<(), PipelineError> {
    for s in splits {
        super::manifest::write_manifest(dir.join(format!("{}.jsonl", s.name)), &s.records)?;
    }
    Ok(())
}
