//! Camera placement ablation: heuristic and VLM pass rates per method.

use std::fmt::Write;
use std::path::Path;

use serde::Serialize;

use super::config::PipelineConfig;
use super::manifest::{write_manifest, ManifestRecord, Stage};
use super::stages::{baseline_poses, heuristic_stage, object_poses, render_stage, vlm_stage, BaselineSpec, VlmStage};
use crate::camgen::baseline::{BaselineMethod, SpatialSampling};
use crate::error::PipelineError;
use crate::scene::Scene;

const OBJECT_CENTRIC: &str = "object_centric";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRates {
    pub method: String,
    pub total: usize,
    pub heuristic_passed: usize,
    pub vlm_passed: usize,
    pub heuristic_percent: f64,
    pub vlm_percent: f64,
    pub best_heuristic: bool,
    pub best_vlm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub scene: String,
    pub methods: Vec<MethodRates>,
}

fn rates(records: &[ManifestRecord]) -> Result<(String, String, MethodRates), PipelineError> {
    let first = records.first().ok_or_else(|| PipelineError::InvalidInput("empty manifest".into()))?;
    if let Some(r) = records.iter().find(|r| r.method != first.method) {
        return Err(PipelineError::InvalidInput(format!("manifest mixes methods {} and {}", first.method, r.method)));
    }
    if let Some(r) = records.iter().find(|r| r.scene != first.scene) {
        return Err(PipelineError::MismatchedScenes(format!("{} and {} in one manifest", first.scene, r.scene)));
    }
    let total = records.len();
    let heuristic_passed = records.iter().filter(|r| r.passed(Stage::Heuristic)).count();
    let vlm_passed = records.iter().filter(|r| r.passed(Stage::Vlm)).count();
    let pct = |c: usize| 100.0 * c as f64 / total as f64;
    let m = MethodRates {
        method: first.method.clone(),
        total,
        heuristic_passed,
        vlm_passed,
        heuristic_percent: pct(heuristic_passed),
        vlm_percent: pct(vlm_passed),
        best_heuristic: false,
        best_vlm: false,
    };
    Ok((first.scene.clone(), first.method.clone(), m))
}

/// Flag the highest rate in each column. Rates are compared as exact
/// fractions, so equal rates are all flagged.
fn flag_best(rows: &mut [MethodRates], count: fn(&MethodRates) -> usize, set: fn(&mut MethodRates)) {
    let beats = |a: &MethodRates, b: &MethodRates| count(a) * b.total > count(b) * a.total;
    let Some(best) = rows.iter().reduce(|a, b| if beats(b, a) { b } else { a }).cloned() else { return };
    for r in rows.iter_mut() {
        if count(r) * best.total == count(&best) * r.total {
            set(r);
        }
    }
}

/// Compare per-method manifests of one scene.
pub fn ablation_report(manifests: &[Vec<ManifestRecord>]) -> Result<AblationReport, PipelineError> {
    if manifests.len() < 2 {
        return Err(PipelineError::InvalidInput("ablation needs at least two methods".into()));
    }
    let mut scene = None;
    let mut methods: Vec<MethodRates> = Vec::new();
    for m in manifests {
        let (s, method, r) = rates(m)?;
        match &scene {
            None => scene = Some(s),
            Some(prev) if *prev != s => return Err(PipelineError::MismatchedScenes(format!("{prev} vs {s}"))),
            _ => {}
        }
        if methods.iter().any(|x| x.method == method) {
            return Err(PipelineError::InvalidInput(format!("method {method} given twice")));
        }
        methods.push(r);
    }
    flag_best(&mut methods, |r| r.heuristic_passed, |r| r.best_heuristic = true);
    flag_best(&mut methods, |r| r.vlm_passed, |r| r.best_vlm = true);
    Ok(AblationReport { scene: scene.expect("at least two manifests"), methods })
}

fn cell(r: Option<&MethodRates>, vlm: bool) -> String {
    match r {
        None => "-".into(),
        Some(r) => {
            let (v, best) = if vlm { (r.vlm_percent, r.best_vlm) } else { (r.heuristic_percent, r.best_heuristic) };
            format!("{v:.1}{}", if best { "*" } else { "" })
        }
    }
}

/// Two blocks: object-centric rows with Heuristic and VLM columns, then the
/// baselines with Uniform and Grid sub-columns. `*` marks a column maximum.
pub fn format_ablation_table(report: &AblationReport) -> String {
    let find = |m: &str| report.methods.iter().find(|r| r.method == m);
    let mut out = String::new();
    writeln!(out, "Scene: {}", report.scene).unwrap();
    if let Some(oc) = find(OBJECT_CENTRIC) {
        writeln!(out, "{:<16}{:>15}{:>10}", "Method", "Heuristic (%)", "VLM (%)").unwrap();
        writeln!(out, "{:<16}{:>15}{:>10}", "Object-centric", cell(Some(oc), false), cell(Some(oc), true)).unwrap();
        writeln!(out).unwrap();
    }
    let baselines = [(BaselineMethod::RandomView, "Random view"), (BaselineMethod::AnchorSweep, "Anchor sweep")];
    writeln!(out, "{:<16}{:>20}{:>20}", "Method", "Heuristic (%)", "VLM (%)").unwrap();
    writeln!(out, "{:<16}{:>10}{:>10}{:>10}{:>10}", "", "Uniform", "Grid", "Uniform", "Grid").unwrap();
    for (m, label) in baselines {
        let u = find(&format!("{}_uniform", m.as_str()));
        let g = find(&format!("{}_grid", m.as_str()));
        writeln!(
            out,
            "{label:<16}{:>10}{:>10}{:>10}{:>10}",
            cell(u, false),
            cell(g, false),
            cell(u, true),
            cell(g, true)
        )
        .unwrap();
    }
    out
}

/// Render and filter one scene under object-centric placement and the four
/// baselines. Baselines get the same image budget as object-centric
/// placement unless `count` says otherwise. Per-method manifests land in
/// `out_dir/<method>/manifest.jsonl`.
pub fn run_ablation(
    scene: &Scene,
    cfg: &PipelineConfig,
    out_dir: &Path,
    count: Option<usize>,
) -> Result<AblationReport, PipelineError> {
    let poses_cfg = &cfg.stage.poses;
    let camera = poses_cfg.camera();
    let gateway = cfg.stage.filter_vlm.gateway()?;
    let prompt = cfg.stage.filter_vlm.filter_prompt()?;
    let options = cfg.stage.filter_vlm.options();
    let vlm = VlmStage {
        gateway: &*gateway,
        prompt: &prompt,
        options: &options,
        max_in_flight: cfg.stage.filter_vlm.max_in_flight,
    };

    let object = object_poses(scene, &camera)?;
    let budget = count.unwrap_or(object.len()).max(1);
    let mut runs = vec![(OBJECT_CENTRIC.to_string(), object)];
    for method in [BaselineMethod::RandomView, BaselineMethod::AnchorSweep] {
        for spatial in [SpatialSampling::Uniform, SpatialSampling::Grid(poses_cfg.grid_n)] {
            let spec = BaselineSpec { method, spatial, count: budget, seed: poses_cfg.seed };
            let poses = baseline_poses(scene, &spec, &camera)?;
            runs.push((format!("{}_{}", method.as_str(), spatial.as_str()), poses));
        }
    }

    let mut manifests = Vec::new();
    for (label, poses) in runs {
        let dir = out_dir.join(&label);
        let images = dir.join("images");
        let mut records = render_stage(scene, &poses, &images)?;
        heuristic_stage(&mut records, &images, Some(&images), &cfg.stage.filter_heuristic);
        vlm_stage(&mut records, &images, &vlm);
        write_manifest(dir.join("manifest.jsonl"), &records)?;
        log::info!("{label}: {} images", records.len());
        manifests.push(records);
    }
    ablation_report(&manifests)
}
