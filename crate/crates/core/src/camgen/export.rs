//! Pose JSONL files.
//!
//! One pose per line. `rotation` is row-major with rows right/up/forward, so a
//! camera-space direction `(x, y, z)` (x right, y up, z forward) maps to world
//! as `x * right + y * up + z * forward`. For cameras that look along −Z with
//! +Y up (Blender, OpenGL), the world-from-camera 4x4 has columns
//! `right, up, -forward, position`; see [`CameraPose::world_from_camera_gl`].

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BaselineMethod, Basis, CameraPose, Provenance, SpatialSampling};
use crate::error::PipelineError;
use crate::geom::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<u32>,
    pub method: String,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    pub position: [f64; 3],
    pub rotation: [f64; 9],
    pub fov_y_deg: f64,
    pub width: u32,
    pub height: u32,
}

impl PoseRecord {
    pub fn from_pose(pose: &CameraPose, scene_name: &str) -> Self {
        let (az, el) = pose.provenance.angles();
        let distance = match pose.provenance {
            Provenance::ObjectCentric { distance, .. } => Some(distance),
            Provenance::Baseline { .. } => None,
        };
        PoseRecord {
            id: pose.id(scene_name),
            object_id: pose.provenance.object_id(),
            method: pose.provenance.method_label(),
            azimuth_deg: az.to_degrees(),
            elevation_deg: el.to_degrees(),
            distance,
            position: pose.position.to_array(),
            rotation: pose.basis.to_row_major(),
            fov_y_deg: pose.fov_y.to_degrees(),
            width: pose.width,
            height: pose.height,
        }
    }

    /// Index encoded as the last path segment of the id.
    pub fn index(&self) -> Result<usize, String> {
        self.id
            .rsplit('/')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("pose id '{}' has no numeric index", self.id))
    }

    /// Scene name encoded as the leading segments of the id.
    pub fn scene(&self) -> &str {
        let mut parts = self.id.rsplitn(3, '/');
        parts.next();
        parts.next();
        parts.next().unwrap_or("")
    }

    pub fn to_pose(&self) -> Result<CameraPose, String> {
        let index = self.index()?;
        let azimuth = self.azimuth_deg.to_radians();
        let elevation = self.elevation_deg.to_radians();
        let provenance = if self.method == "object_centric" {
            Provenance::ObjectCentric {
                object_id: self.object_id.ok_or("object_centric pose without object_id")?,
                view_index: index,
                azimuth,
                elevation,
                distance: self.distance.ok_or("object_centric pose without distance")?,
            }
        } else {
            let (m, s) = self.method.rsplit_once('_').ok_or_else(|| format!("unknown method '{}'", self.method))?;
            let spatial = match s {
                "uniform" => SpatialSampling::Uniform,
                // The cell count does not affect rendering.
                "grid" => SpatialSampling::Grid(0),
                other => return Err(format!("unknown spatial variant '{other}'")),
            };
            Provenance::Baseline {
                method: m.parse::<BaselineMethod>()?,
                spatial,
                sample_index: index,
                azimuth,
                elevation,
            }
        };
        Ok(CameraPose {
            position: Vec3::from(self.position),
            basis: Basis::from_row_major(&self.rotation),
            fov_y: self.fov_y_deg.to_radians(),
            width: self.width,
            height: self.height,
            provenance,
        })
    }
}

pub fn write_poses(path: impl AsRef<Path>, records: &[PoseRecord]) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("pose serialization is infallible");
        writeln!(w, "{line}").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<PoseRecord>, PipelineError> {
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
