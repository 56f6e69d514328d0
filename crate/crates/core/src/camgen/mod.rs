//! Object-centric camera placement and the object-agnostic baseline samplers.
//!
//! Every object is orbited on rings of fixed elevation. The camera distance is
//! chosen so that the object's bounding box, projected onto the camera's up
//! axis, spans a fixed fraction of the image height.

pub mod baseline;
pub mod export;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baseline::{grid_quotas, sample_baseline_poses, stream_id, BaselineMethod, SpatialSampling};
pub use export::{read_poses, write_poses, PoseRecord};

use crate::error::CameraError;
use crate::geom::{Aabb, Vec3};
use crate::scene::{Scene, SceneObject};

/// Past this |forward·Z| the world-up reference is swapped for +Y.
const UP_SINGULARITY: f64 = 1.0 - 1e-6;
/// Relative tolerance for a vanishing projected span.
const DEGENERATE_REL_EPS: f64 = 1e-9;

/// Camera orientation. Rows of the exported rotation matrix are `right`, `up`, `forward`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Basis {
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

impl Basis {
    pub fn to_row_major(&self) -> [f64; 9] {
        let (r, u, f) = (self.right, self.up, self.forward);
        [r.x, r.y, r.z, u.x, u.y, u.z, f.x, f.y, f.z]
    }

    pub fn from_row_major(m: &[f64; 9]) -> Self {
        Basis {
            right: Vec3::new(m[0], m[1], m[2]),
            up: Vec3::new(m[3], m[4], m[5]),
            forward: Vec3::new(m[6], m[7], m[8]),
        }
    }

    /// Largest deviation from orthonormality over the three axes.
    pub fn orthonormality_error(&self) -> f64 {
        let axes = [self.right, self.up, self.forward];
        let mut err: f64 = 0.0;
        for (i, a) in axes.iter().enumerate() {
            err = err.max((a.length() - 1.0).abs());
            for b in &axes[i + 1..] {
                err = err.max(a.dot(*b).abs());
            }
        }
        err
    }
}

/// Where a pose came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    ObjectCentric {
        object_id: u32,
        /// `elevation_index * azimuth_count + azimuth_index`.
        view_index: usize,
        azimuth: f64,
        elevation: f64,
        distance: f64,
    },
    Baseline {
        method: BaselineMethod,
        spatial: SpatialSampling,
        sample_index: usize,
        azimuth: f64,
        elevation: f64,
    },
}

impl Provenance {
    /// Method label used in pose files and manifests.
    pub fn method_label(&self) -> String {
        match self {
            Provenance::ObjectCentric { .. } => "object_centric".to_string(),
            Provenance::Baseline { method, spatial, .. } => method_label(*method, *spatial),
        }
    }

    pub fn object_id(&self) -> Option<u32> {
        match self {
            Provenance::ObjectCentric { object_id, .. } => Some(*object_id),
            Provenance::Baseline { .. } => None,
        }
    }

    pub fn angles(&self) -> (f64, f64) {
        match self {
            Provenance::ObjectCentric { azimuth, elevation, .. } | Provenance::Baseline { azimuth, elevation, .. } => {
                (*azimuth, *elevation)
            }
        }
    }
}

pub fn method_label(method: BaselineMethod, spatial: SpatialSampling) -> String {
    format!("{}_{}", method.as_str(), spatial.as_str())
}

/// A pinhole camera with its origin story.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub basis: Basis,
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
    pub provenance: Provenance,
}

impl CameraPose {
    /// Stable id `<scene>/<object_id or method>/<view or sample index>`.
    pub fn id(&self, scene_name: &str) -> String {
        match &self.provenance {
            Provenance::ObjectCentric { object_id, view_index, .. } => {
                format!("{scene_name}/{object_id}/{view_index}")
            }
            Provenance::Baseline { sample_index, .. } => {
                format!("{scene_name}/{}/{sample_index}", self.provenance.method_label())
            }
        }
    }

    /// `tan` of the horizontal and vertical half-angles.
    pub fn half_tangents(&self) -> (f64, f64) {
        let ty = (self.fov_y * 0.5).tan();
        (ty * f64::from(self.width) / f64::from(self.height), ty)
    }

    /// Pixel coordinates (x right, y down, continuous, image center at
    /// `(width/2, height/2)`) of a world point, or `None` if it is behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let rel = p - self.position;
        let depth = rel.dot(self.basis.forward);
        if depth <= 0.0 {
            return None;
        }
        let (tx, ty) = self.half_tangents();
        let ndc_x = rel.dot(self.basis.right) / depth / tx;
        let ndc_y = rel.dot(self.basis.up) / depth / ty;
        let w = f64::from(self.width);
        let h = f64::from(self.height);
        Some(((1.0 + ndc_x) * 0.5 * w, (1.0 - ndc_y) * 0.5 * h))
    }

    /// Unnormalized direction of the primary ray through the center of pixel `(px, py)`.
    pub fn pixel_ray(&self, px: u32, py: u32) -> Vec3 {
        let (tx, ty) = self.half_tangents();
        let ndc_x = (f64::from(px) + 0.5) / f64::from(self.width) * 2.0 - 1.0;
        let ndc_y = 1.0 - (f64::from(py) + 0.5) / f64::from(self.height) * 2.0;
        self.basis.forward + self.basis.right * (ndc_x * tx) + self.basis.up * (ndc_y * ty)
    }

    /// World-from-camera 4x4 (row-major) for renderers whose cameras look along −Z
    /// with +Y up, e.g. Blender: columns are `right`, `up`, `-forward`, `position`.
    pub fn world_from_camera_gl(&self) -> [[f64; 4]; 4] {
        let (r, u, f, p) = (self.basis.right, self.basis.up, self.basis.forward, self.position);
        [[r.x, u.x, -f.x, p.x], [r.y, u.y, -f.y, p.y], [r.z, u.z, -f.z, p.z], [0.0, 0.0, 0.0, 1.0]]
    }
}

/// Angle-valued knobs for object-centric placement. Angles are radians.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraConfig {
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
    pub fov_y: f64,
    pub fill_fraction: f64,
    pub width: u32,
    pub height: u32,
    pub min_bbox_diagonal: Option<f64>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraSettings::default().to_config().expect("defaults are valid")
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |m: &str| Err(CameraError::InvalidConfig(m.to_string()));
        if !(self.fill_fraction > 0.0 && self.fill_fraction <= 1.0) {
            return bad("fill_fraction must lie in (0, 1]");
        }
        if !(self.fov_y > 0.0 && self.fov_y < PI) {
            return bad("fov_y must lie in (0, 180) degrees");
        }
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be positive");
        }
        if self.azimuths.is_empty() || self.elevations.is_empty() {
            return bad("azimuth and elevation sets must be nonempty");
        }
        if self.azimuths.iter().chain(&self.elevations).any(|a| !a.is_finite()) {
            return bad("angles must be finite");
        }
        if let Some(d) = self.min_bbox_diagonal {
            if !(d.is_finite() && d >= 0.0) {
                return bad("min_bbox_diagonal must be finite and nonnegative");
            }
        }
        Ok(())
    }
}

/// File/CLI form of [`CameraConfig`], in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSettings {
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
    pub fov_y_deg: f64,
    pub fill_fraction: f64,
    pub width: u32,
    pub height: u32,
    pub min_bbox_diagonal: Option<f64>,
}

impl Default for CameraSettings {
    fn default() -> Self {
        Self {
            azimuths_deg: (0..8).map(|i| f64::from(i) * 45.0).collect(),
            elevations_deg: vec![0.0],
            fov_y_deg: 90.0,
            fill_fraction: 2.0 / 3.0,
            width: 256,
            height: 256,
            min_bbox_diagonal: None,
        }
    }
}

impl CameraSettings {
    pub fn to_config(&self) -> Result<CameraConfig, CameraError> {
        let cfg = CameraConfig {
            azimuths: self.azimuths_deg.iter().map(|d| d.to_radians()).collect(),
            elevations: self.elevations_deg.iter().map(|d| d.to_radians()).collect(),
            fov_y: self.fov_y_deg.to_radians(),
            fill_fraction: self.fill_fraction,
            width: self.width,
            height: self.height,
            min_bbox_diagonal: self.min_bbox_diagonal,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Unit direction from the orbit center towards the camera.
pub fn viewing_direction(azimuth: f64, elevation: f64) -> Vec3 {
    let (sp, cp) = azimuth.sin_cos();
    let (st, ct) = elevation.sin_cos();
    let v = Vec3::new(ct * cp, ct * sp, st);
    v / v.length()
}

/// Orientation for a camera at `position` looking at `target`.
pub fn look_at_pose(position: Vec3, target: Vec3) -> Result<Basis, CameraError> {
    let forward = (target - position).try_normalize().ok_or(CameraError::DegeneratePose)?;
    Ok(basis_from_forward(forward))
}

/// Right-handed basis with the given unit `forward`; up is as close to +Z as possible.
fn basis_from_forward(forward: Vec3) -> Basis {
    let up_ref = if forward.dot(Vec3::Z).abs() > UP_SINGULARITY { Vec3::Y } else { Vec3::Z };
    let right = forward.cross(up_ref) / forward.cross(up_ref).length();
    let up = right.cross(forward);
    Basis { right, up, forward }
}

/// Half the span of the box's eight corners along the camera-up axis of a
/// camera looking back along `view_dir` at the box center.
pub fn projected_half_height(aabb: &Aabb, view_dir: Vec3) -> Result<f64, CameraError> {
    projected_half_height_eps(aabb, view_dir, DEGENERATE_REL_EPS * aabb.diagonal())
}

/// As [`projected_half_height`], with an explicit degeneracy threshold.
pub fn projected_half_height_eps(aabb: &Aabb, view_dir: Vec3, epsilon: f64) -> Result<f64, CameraError> {
    let up = basis_from_forward(-view_dir).up;
    let c = aabb.center();
    let (lo, hi) = aabb.corners().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let s = (*p - c).dot(up);
        (lo.min(s), hi.max(s))
    });
    let half_height = 0.5 * (hi - lo);
    if half_height > epsilon {
        Ok(half_height)
    } else {
        Err(CameraError::DegenerateObject { half_height, epsilon })
    }
}

/// Distance at which a half-height `h_o` fills `fill` of a `fov_y` frame vertically.
pub fn camera_distance(half_height: f64, fill: f64, fov_y: f64) -> Result<f64, CameraError> {
    if half_height.is_nan() || half_height <= 0.0 {
        return Err(CameraError::DegenerateObject { half_height, epsilon: 0.0 });
    }
    if !(fill > 0.0 && fill <= 1.0) {
        return Err(CameraError::InvalidConfig("fill_fraction must lie in (0, 1]".into()));
    }
    if !(fov_y > 0.0 && fov_y < PI) {
        return Err(CameraError::InvalidConfig("fov_y must lie in (0, pi)".into()));
    }
    Ok(half_height / (fill * (fov_y * 0.5).tan()))
}

/// A view the placer could not produce.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedView {
    pub view_index: usize,
    pub reason: CameraError,
}

/// Output of object-centric placement for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub object_id: u32,
    pub poses: Vec<CameraPose>,
    pub skipped: Vec<SkippedView>,
}

/// Orbit poses around one object. Degeneracy is judged relative to the object's own diagonal.
pub fn place_object_cameras(object: &SceneObject, config: &CameraConfig) -> Result<Placement, CameraError> {
    place_object_cameras_eps(object, config, DEGENERATE_REL_EPS * object.aabb.diagonal())
}

fn place_object_cameras_eps(
    object: &SceneObject,
    config: &CameraConfig,
    epsilon: f64,
) -> Result<Placement, CameraError> {
    config.validate()?;
    let skip = |reason: String| CameraError::ObjectSkipped { object_id: object.id, reason };
    let diag = object.aabb.diagonal();
    if let Some(min_diag) = config.min_bbox_diagonal {
        if diag < min_diag {
            return Err(skip(format!("bbox diagonal {diag:.6} below minimum {min_diag}")));
        }
    }

    let center = object.aabb.center();
    let mut poses = Vec::with_capacity(config.azimuths.len() * config.elevations.len());
    let mut skipped = Vec::new();
    for (ei, &elevation) in config.elevations.iter().enumerate() {
        for (ai, &azimuth) in config.azimuths.iter().enumerate() {
            let view_index = ei * config.azimuths.len() + ai;
            let v = viewing_direction(azimuth, elevation);
            let pose = projected_half_height_eps(&object.aabb, v, epsilon)
                .and_then(|h| camera_distance(h, config.fill_fraction, config.fov_y))
                .and_then(|distance| {
                    let position = center + v * distance;
                    let basis = look_at_pose(position, center)?;
                    Ok(CameraPose {
                        position,
                        basis,
                        fov_y: config.fov_y,
                        width: config.width,
                        height: config.height,
                        provenance: Provenance::ObjectCentric {
                            object_id: object.id,
                            view_index,
                            azimuth,
                            elevation,
                            distance,
                        },
                    })
                });
            match pose {
                Ok(p) => poses.push(p),
                Err(reason) => skipped.push(SkippedView { view_index, reason }),
            }
        }
    }
    if poses.is_empty() {
        let first = skipped.first().map(|s| s.reason.to_string()).unwrap_or_default();
        return Err(skip(format!("no usable views ({first})")));
    }
    Ok(Placement { object_id: object.id, poses, skipped })
}

/// Placements for every object in the scene, ordered by object id. Degeneracy
/// is judged relative to the scene diagonal.
pub fn place_scene_cameras(scene: &Scene, config: &CameraConfig) -> Vec<Result<Placement, CameraError>> {
    let epsilon = DEGENERATE_REL_EPS * scene.scene_aabb.diagonal();
    let mut objects: Vec<&SceneObject> = scene.objects.iter().collect();
    objects.sort_by_key(|o| o.id);
    objects.par_iter().map(|o| place_object_cameras_eps(o, config, epsilon)).collect()
}
