use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::manifest::{ManifestRecord, Stage};

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), n: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneStats {
    pub scene: String,
    pub total: usize,
    pub heuristic_passed: usize,
    pub heuristic_percent: f64,
    pub vlm_passed: usize,
    pub vlm_percent: f64,
    /// Records with an error at any stage; they are not rejections.
    pub errors: usize,
    /// Over VLM-passed records that carry a score.
    pub clip: Option<MeanStd>,
    pub aesthetic: Option<MeanStd>,
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Per-scene funnel counts, sorted by scene name.
pub fn scene_stats(records: &[ManifestRecord]) -> Vec<SceneStats> {
    let mut by_scene: BTreeMap<&str, Vec<&ManifestRecord>> = BTreeMap::new();
    for r in records {
        by_scene.entry(r.scene.as_str()).or_default().push(r);
    }
    by_scene
        .into_iter()
        .map(|(scene, rs)| {
            let total = rs.len();
            let heuristic_passed = rs.iter().filter(|r| r.passed(Stage::Heuristic)).count();
            let vlm: Vec<&&ManifestRecord> = rs.iter().filter(|r| r.passed(Stage::Vlm)).collect();
            let clip: Vec<f64> = vlm.iter().filter_map(|r| r.clip_score).collect();
            let aesthetic: Vec<f64> = vlm.iter().filter_map(|r| r.aesthetic_score).collect();
            SceneStats {
                scene: scene.to_string(),
                total,
                heuristic_passed,
                heuristic_percent: percent(heuristic_passed, total),
                vlm_passed: vlm.len(),
                vlm_percent: percent(vlm.len(), total),
                errors: rs.iter().filter(|r| r.error_stage().is_some()).count(),
                clip: MeanStd::of(&clip),
                aesthetic: MeanStd::of(&aesthetic),
            }
        })
        .collect()
}

pub fn count_with_percent(count: usize, pct: f64) -> String {
    format!("{count} ({pct:.1}%)")
}

fn mean_std(m: Option<MeanStd>) -> String {
    m.map_or_else(|| "-".to_string(), |m| format!("{:.2} ± {:.2}", m.mean, m.std))
}

/// Aligned text table with columns Scene, Total, Heuristic Passed, VLM Passed,
/// CLIP Score, Aesthetic.
pub fn format_stats_table(stats: &[SceneStats]) -> String {
    let header = ["Scene", "Total", "Heuristic Passed", "VLM Passed", "CLIP Score", "Aesthetic"];
    let rows: Vec<[String; 6]> = stats
        .iter()
        .map(|s| {
            [
                s.scene.clone(),
                s.total.to_string(),
                count_with_percent(s.heuristic_passed, s.heuristic_percent),
                count_with_percent(s.vlm_passed, s.vlm_percent),
                mean_std(s.clip),
                mean_std(s.aesthetic),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let padded: Vec<String> =
            cells.iter().zip(&widths).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
        writeln!(out, "{}", padded.join("  ").trim_end()).unwrap();
    };
    line(&header.map(String::from));
    for row in &rows {
        line(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::manifest::{StageStatus, StageStatuses};

    fn rec(scene: &str, heuristic: bool, vlm: bool, clip: Option<f64>) -> ManifestRecord {
        let st = |b: bool| if b { StageStatus::Passed } else { StageStatus::rejected(["x"]) };
        ManifestRecord {
            image_id: format!("{scene}/1/0"),
            scene: scene.into(),
            object_id: Some(1),
            method: "object_centric".into(),
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
            distance: Some(1.0),
            rgb: String::new(),
            seg: None,
            status: StageStatuses {
                render: StageStatus::Passed,
                heuristic: st(heuristic),
                vlm: if heuristic { st(vlm) } else { StageStatus::Pending },
                ..Default::default()
            },
            heuristic: None,
            vlm_reason: None,
            caption: None,
            caption_warning: false,
            clip_score: clip,
            aesthetic_score: clip.map(|c| c / 5.0),
            split: None,
            split_rank: None,
        }
    }

    #[test]
    fn counts_and_percent() {
        let records: Vec<_> = (0..100).map(|i| rec("a", i < 45, i < 10, None)).collect();
        let s = &scene_stats(&records)[0];
        assert_eq!(count_with_percent(s.heuristic_passed, s.heuristic_percent), "45 (45.0%)");
        assert_eq!(s.vlm_passed, 10);
    }

    #[test]
    fn population_std() {
        let m = MeanStd::of(&[20.0, 30.0]).unwrap();
        assert_eq!((m.mean, m.std), (25.0, 5.0));
        let records =
            vec![rec("a", true, true, Some(20.0)), rec("a", true, true, Some(30.0)), rec("a", true, false, Some(99.0))];
        let s = &scene_stats(&records)[0];
        assert_eq!(s.clip.unwrap().mean, 25.0);
    }

    #[test]
    fn table_layout() {
        let records = vec![rec("desk", true, true, Some(25.0)), rec("desk", false, false, None)];
        let table = format_stats_table(&scene_stats(&records));
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("Scene  Total  Heuristic Passed  VLM Passed"));
        assert!(lines[1].contains("1 (50.0%)"));
        assert!(lines[1].contains("25.00 ± 0.00"));
    }
}
