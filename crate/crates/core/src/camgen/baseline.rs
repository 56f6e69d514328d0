//! Object-agnostic pose samplers used as ablation baselines.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)` and switched to the stream returned by [`stream_id`],
//! so every (method, spatial variant, scene) triple draws from its own
//! reproducible sequence. Uniform reals are `lo + (hi - lo) * u` with
//! `u = rng.gen::<f64>()` (53-bit, `[0, 1)`), which is platform independent.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{look_at_pose, method_label, viewing_direction, CameraPose, Provenance};
use crate::error::CameraError;
use crate::geom::{Aabb, Vec3};

const SWEEP_VIEWS: usize = 8;
const RANDOM_ELEVATION_LIMIT_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    /// One pose per sampled position, looking along a random direction.
    RandomView,
    /// Eight outward views per sampled anchor, 45° apart at zero elevation.
    AnchorSweep,
}

impl BaselineMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::RandomView => "random_view",
            BaselineMethod::AnchorSweep => "anchor_sweep",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random_view" => Ok(BaselineMethod::RandomView),
            "anchor_sweep" => Ok(BaselineMethod::AnchorSweep),
            other => Err(format!("unknown baseline method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpatialSampling {
    Uniform,
    /// `n³` equal cells with equal quotas; the remainder goes to the lowest-index cells.
    Grid(u32),
}

impl SpatialSampling {
    pub fn as_str(self) -> &'static str {
        match self {
            SpatialSampling::Uniform => "uniform",
            SpatialSampling::Grid(_) => "grid",
        }
    }
}

/// FNV-1a over `method/spatial/scene`, used as the ChaCha stream number.
pub fn stream_id(method: BaselineMethod, spatial: SpatialSampling, scene_name: &str) -> u64 {
    let key = format!("{}/{}/{}", method_label(method, spatial), grid_n(spatial), scene_name);
    key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

fn grid_n(spatial: SpatialSampling) -> u32 {
    match spatial {
        SpatialSampling::Uniform => 0,
        SpatialSampling::Grid(n) => n,
    }
}

/// Per-cell sample counts for `total` samples over `n³` cells. Cell `i` is
/// `(ix, iy, iz)` with `i = ix + n * (iy + n * iz)`.
pub fn grid_quotas(total: usize, n: u32) -> Vec<usize> {
    let cells = (n as usize).pow(3);
    let base = total / cells;
    let extra = total % cells;
    (0..cells).map(|i| base + usize::from(i < extra)).collect()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    (lo + (hi - lo) * u).clamp(lo, hi)
}

fn sample_in(rng: &mut ChaCha8Rng, b: &Aabb) -> Vec3 {
    let x = uniform(rng, b.min.x, b.max.x);
    let y = uniform(rng, b.min.y, b.max.y);
    let z = uniform(rng, b.min.z, b.max.z);
    Vec3::new(x, y, z)
}

fn grid_cell(b: &Aabb, n: u32, index: usize) -> Aabb {
    let n_us = n as usize;
    let idx = [index % n_us, (index / n_us) % n_us, index / (n_us * n_us)];
    let ext = b.extent();
    let nf = f64::from(n);
    let lo = |axis: usize, i: usize| b.min[axis] + ext[axis] * (i as f64 / nf);
    let hi = |axis: usize, i: usize| {
        if i + 1 == n_us {
            b.max[axis]
        } else {
            b.min[axis] + ext[axis] * ((i + 1) as f64 / nf)
        }
    };
    Aabb::new(
        Vec3::new(lo(0, idx[0]), lo(1, idx[1]), lo(2, idx[2])),
        Vec3::new(hi(0, idx[0]), hi(1, idx[1]), hi(2, idx[2])),
    )
}

fn sample_positions(rng: &mut ChaCha8Rng, b: &Aabb, spatial: SpatialSampling, count: usize) -> Vec<Vec3> {
    match spatial {
        SpatialSampling::Uniform => (0..count).map(|_| sample_in(rng, b)).collect(),
        SpatialSampling::Grid(n) => grid_quotas(count, n)
            .into_iter()
            .enumerate()
            .flat_map(|(cell, quota)| {
                let cb = grid_cell(b, n, cell);
                (0..quota).map(|_| sample_in(rng, &cb)).collect::<Vec<_>>()
            })
            .collect(),
    }
}

/// Parameters shared by all baseline poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineCamera {
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

/// Sample object-agnostic poses inside `scene_aabb`.
///
/// `RandomView` yields exactly `count` poses. `AnchorSweep` samples
/// `ceil(count / 8)` anchors and yields eight views for each.
pub fn sample_baseline_poses(
    scene_aabb: &Aabb,
    scene_name: &str,
    method: BaselineMethod,
    spatial: SpatialSampling,
    count: usize,
    seed: u64,
    camera: BaselineCamera,
) -> Result<Vec<CameraPose>, CameraError> {
    if count == 0 {
        return Err(CameraError::InvalidConfig("baseline count must be positive".into()));
    }
    if let SpatialSampling::Grid(0) = spatial {
        return Err(CameraError::InvalidConfig("grid size must be at least 1".into()));
    }
    if !scene_aabb.is_valid() {
        return Err(CameraError::InvalidConfig("scene_aabb is invalid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(method, spatial, scene_name));

    let make = |position: Vec3, sample_index: usize, azimuth: f64, elevation: f64| -> Result<CameraPose, CameraError> {
        let dir = viewing_direction(azimuth, elevation);
        Ok(CameraPose {
            position,
            basis: look_at_pose(position, position + dir)?,
            fov_y: camera.fov_y,
            width: camera.width,
            height: camera.height,
            provenance: Provenance::Baseline { method, spatial, sample_index, azimuth, elevation },
        })
    };

    match method {
        BaselineMethod::RandomView => {
            let positions = sample_positions(&mut rng, scene_aabb, spatial, count);
            let limit = RANDOM_ELEVATION_LIMIT_DEG.to_radians();
            positions
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    let azimuth = uniform(&mut rng, 0.0, 2.0 * PI);
                    let elevation = uniform(&mut rng, -limit, limit);
                    make(p, i, azimuth, elevation)
                })
                .collect()
        }
        BaselineMethod::AnchorSweep => {
            let anchors = count.div_ceil(SWEEP_VIEWS);
            let positions = sample_positions(&mut rng, scene_aabb, spatial, anchors);
            let mut poses = Vec::with_capacity(anchors * SWEEP_VIEWS);
            for (a, p) in positions.into_iter().enumerate() {
                for k in 0..SWEEP_VIEWS {
                    let azimuth = (k as f64 * 45.0).to_radians();
                    poses.push(make(p, a * SWEEP_VIEWS + k, azimuth, 0.0)?);
                }
            }
            Ok(poses)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAM: BaselineCamera = BaselineCamera { fov_y: std::f64::consts::FRAC_PI_2, width: 64, height: 64 };

    fn room() -> Aabb {
        Aabb::new(Vec3::new(-2.0, -3.0, 0.0), Vec3::new(4.0, 1.0, 2.5))
    }

    #[test]
    fn quotas_for_paper_grid() {
        let q = grid_quotas(5000, 4);
        assert_eq!(q.len(), 64);
        assert_eq!(q.iter().sum::<usize>(), 5000);
        assert!(q[..8].iter().all(|&c| c == 79));
        assert!(q[8..].iter().all(|&c| c == 78));
    }

    #[test]
    fn anchor_sweep_counts() {
        let poses =
            sample_baseline_poses(&room(), "r", BaselineMethod::AnchorSweep, SpatialSampling::Uniform, 5000, 1, CAM)
                .unwrap();
        assert_eq!(poses.len(), 5000);
        // Non-multiples round the anchor count up.
        let poses =
            sample_baseline_poses(&room(), "r", BaselineMethod::AnchorSweep, SpatialSampling::Uniform, 9, 1, CAM)
                .unwrap();
        assert_eq!(poses.len(), 16);
        assert!(poses[..8].iter().all(|p| p.position == poses[0].position));
    }

    #[test]
    fn random_view_elevation_window_and_orientation() {
        let poses =
            sample_baseline_poses(&room(), "r", BaselineMethod::RandomView, SpatialSampling::Grid(2), 400, 9, CAM)
                .unwrap();
        assert_eq!(poses.len(), 400);
        for p in &poses {
            let (az, el) = p.provenance.angles();
            assert!(el.abs() <= 30f64.to_radians() + 1e-12);
            assert!((0.0..2.0 * PI).contains(&az));
            assert!((p.basis.forward - viewing_direction(az, el)).length() < 1e-12);
            assert!(room().contains_point(p.position));
        }
    }

    #[test]
    fn grid_samples_stay_in_their_cells() {
        let poses =
            sample_baseline_poses(&room(), "r", BaselineMethod::RandomView, SpatialSampling::Grid(4), 130, 3, CAM)
                .unwrap();
        let quotas = grid_quotas(130, 4);
        let mut i = 0;
        for (cell, q) in quotas.iter().enumerate() {
            let cb = grid_cell(&room(), 4, cell);
            for p in &poses[i..i + q] {
                assert!(cb.contains_point(p.position));
            }
            i += q;
        }
    }

    #[test]
    fn deterministic_per_seed_and_stream() {
        let run = |seed, name| {
            sample_baseline_poses(&room(), name, BaselineMethod::RandomView, SpatialSampling::Uniform, 50, seed, CAM)
                .unwrap()
        };
        assert_eq!(run(5, "a"), run(5, "a"));
        assert_ne!(run(5, "a"), run(6, "a"));
        assert_ne!(run(5, "a"), run(5, "b"));
    }

    #[test]
    fn zero_count_rejected() {
        let r = sample_baseline_poses(&room(), "r", BaselineMethod::RandomView, SpatialSampling::Uniform, 0, 1, CAM);
        assert!(matches!(r, Err(CameraError::InvalidConfig(_))));
        let r = sample_baseline_poses(&room(), "r", BaselineMethod::RandomView, SpatialSampling::Grid(0), 4, 1, CAM);
        assert!(matches!(r, Err(CameraError::InvalidConfig(_))));
    }
}
