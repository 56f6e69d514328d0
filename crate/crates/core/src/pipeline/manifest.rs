//! JSONL manifests: one [`ManifestRecord`] per rendered image.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camgen::export::PoseRecord;
use crate::error::PipelineError;
use crate::imgfilter::HeuristicStats;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum StageStatus {
    #[default]
    Pending,
    Passed,
    Rejected {
        reasons: Vec<String>,
    },
    Error {
        message: String,
    },
}

impl StageStatus {
    pub fn is_pending(&self) -> bool {
        matches!(self, StageStatus::Pending)
    }

    pub fn is_passed(&self) -> bool {
        matches!(self, StageStatus::Passed)
    }

    pub fn is_error(&self) -> bool {
        matches!(self, StageStatus::Error { .. })
    }

    pub fn rejected<S: ToString>(reasons: impl IntoIterator<Item = S>) -> Self {
        StageStatus::Rejected { reasons: reasons.into_iter().map(|r| r.to_string()).collect() }
    }

    pub fn error(message: impl ToString) -> Self {
        StageStatus::Error { message: message.to_string() }
    }
}

/// Funnel stages that carry a per-record status, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Render,
    Heuristic,
    Vlm,
    Caption,
    Score,
    Quality,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Render, Stage::Heuristic, Stage::Vlm, Stage::Caption, Stage::Score, Stage::Quality];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Render => "render",
            Stage::Heuristic => "heuristic",
            Stage::Vlm => "vlm",
            Stage::Caption => "caption",
            Stage::Score => "score",
            Stage::Quality => "quality",
        }
    }

    pub fn previous(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self).expect("stage is listed");
        i.checked_sub(1).map(|p| Stage::ALL[p])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageStatuses {
    pub render: StageStatus,
    pub heuristic: StageStatus,
    pub vlm: StageStatus,
    pub caption: StageStatus,
    pub score: StageStatus,
    pub quality: StageStatus,
}

impl StageStatuses {
    pub fn get(&self, stage: Stage) -> &StageStatus {
        match stage {
            Stage::Render => &self.render,
            Stage::Heuristic => &self.heuristic,
            Stage::Vlm => &self.vlm,
            Stage::Caption => &self.caption,
            Stage::Score => &self.score,
            Stage::Quality => &self.quality,
        }
    }

    pub fn get_mut(&mut self, stage: Stage) -> &mut StageStatus {
        match stage {
            Stage::Render => &mut self.render,
            Stage::Heuristic => &mut self.heuristic,
            Stage::Vlm => &mut self.vlm,
            Stage::Caption => &mut self.caption,
            Stage::Score => &mut self.score,
            Stage::Quality => &mut self.quality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub scene: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<u32>,
    pub method: String,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    /// Paths relative to the image directory.
    pub rgb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg: Option<String>,
    pub status: StageStatuses,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristic: Option<HeuristicStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vlm_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub caption_warning: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aesthetic_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Position within the split's selection order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_rank: Option<usize>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ManifestRecord {
    /// A fresh record for a pose, with every stage pending.
    pub fn from_pose(pose: &PoseRecord) -> Self {
        ManifestRecord {
            image_id: pose.id.clone(),
            scene: pose.scene().to_string(),
            object_id: pose.object_id,
            method: pose.method.clone(),
            azimuth_deg: pose.azimuth_deg,
            elevation_deg: pose.elevation_deg,
            distance: pose.distance,
            rgb: format!("{}.png", pose.id),
            seg: Some(format!("{}.seg.png", pose.id)),
            status: StageStatuses::default(),
            heuristic: None,
            vlm_reason: None,
            caption: None,
            caption_warning: false,
            clip_score: None,
            aesthetic_score: None,
            split: None,
            split_rank: None,
        }
    }

    /// True when `stage` has not run yet and every earlier stage passed.
    pub fn ready_for(&self, stage: Stage) -> bool {
        self.status.get(stage).is_pending() && stage.previous().is_none_or(|p| self.status.get(p).is_passed())
    }

    pub fn passed(&self, stage: Stage) -> bool {
        self.status.get(stage).is_passed()
    }

    /// First stage that ended in an error, if any.
    pub fn error_stage(&self) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| self.status.get(*s).is_error())
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, PipelineError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| PipelineError::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Write through a sibling temp file and rename, so a crash never leaves a
/// truncated manifest behind.
pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<(), PipelineError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("manifest serialization is infallible"));
        text.push('\n');
    }
    write_atomic(path.as_ref(), text.as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| PipelineError::io(tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| PipelineError::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| PipelineError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> ManifestRecord {
        let pose = PoseRecord {
            id: "desk/3/5".into(),
            object_id: Some(3),
            method: "object_centric".into(),
            azimuth_deg: 225.0,
            elevation_deg: 0.0,
            distance: Some(1.5),
            position: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            fov_y_deg: 90.0,
            width: 256,
            height: 256,
        };
        ManifestRecord::from_pose(&pose)
    }

    #[test]
    fn status_json_shape() {
        let s = serde_json::to_string(&StageStatus::rejected(["zero_fill"])).unwrap();
        assert_eq!(s, r#"{"state":"rejected","reasons":["zero_fill"]}"#);
        assert_eq!(serde_json::to_string(&StageStatus::Pending).unwrap(), r#"{"state":"pending"}"#);
    }

    #[test]
    fn record_round_trip_and_key_order() {
        let r = record();
        assert_eq!(r.scene, "desk");
        assert_eq!(r.rgb, "desk/3/5.png");
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.starts_with(r#"{"image_id":"desk/3/5","scene":"desk","object_id":3,"method":"object_centric""#));
        assert!(!line.contains("clip_score") && !line.contains("caption_warning"));
        let back: ManifestRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn readiness_follows_funnel() {
        let mut r = record();
        assert!(r.ready_for(Stage::Render));
        assert!(!r.ready_for(Stage::Heuristic));
        r.status.render = StageStatus::Passed;
        assert!(r.ready_for(Stage::Heuristic));
        r.status.heuristic = StageStatus::error("unreadable");
        assert!(!r.ready_for(Stage::Vlm));
        assert_eq!(r.error_stage(), Some(Stage::Heuristic));
    }

    #[test]
    fn atomic_write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/m.jsonl");
        write_manifest(&p, &[record()]).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), vec![record()]);
        assert!(!dir.path().join("sub/m.jsonl.tmp").exists());
    }
}
