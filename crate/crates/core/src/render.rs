//! Deterministic direct-lighting raycaster producing an RGB image and an
//! object-id segmentation map per camera pose.
//!
//! Shading per hit is `albedo * (ambient + Σ visible(l) * max(0, n·l) * intensity)`;
//! rays that escape take the ambient color. The linear result is clamped to
//! `[0, 1]`, encoded with gamma 2.2 and rounded to 8 bits. Ground-plane hits
//! are shaded but stay background (id 0) in the segmentation map.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use rayon::prelude::*;

use crate::camgen::CameraPose;
use crate::geom::Vec3;
use crate::scene::{Light, Primitive, Scene};

/// Self-intersection guard for primary and shadow rays.
pub const T_MIN: f64 = 1e-4;
pub const GAMMA: f64 = 2.2;

/// Row-major 8-bit RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![0; width as usize * height as usize * 3] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> image::ImageResult<()> {
        let buf: ImageBuffer<Rgb<u8>, &[u8]> =
            ImageBuffer::from_raw(self.width, self.height, self.pixels.as_slice()).expect("buffer size matches");
        buf.save_with_format(path, image::ImageFormat::Png)
    }

    pub fn load_png(path: impl AsRef<Path>) -> image::ImageResult<Self> {
        let img = image::open(path)?.into_rgb8();
        let (width, height) = img.dimensions();
        Ok(Self { width, height, pixels: img.into_raw() })
    }

    /// PNG-encoded bytes, for shipping to remote models.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        let buf: ImageBuffer<Rgb<u8>, &[u8]> =
            ImageBuffer::from_raw(self.width, self.height, self.pixels.as_slice()).expect("buffer size matches");
        buf.write_to(&mut out, image::ImageFormat::Png).expect("in-memory PNG encoding");
        out.into_inner()
    }
}

/// Row-major 16-bit object ids, 0 = background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMap {
    pub width: u32,
    pub height: u32,
    pub ids: Vec<u16>,
}

impl SegMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, ids: vec![0; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.ids[y as usize * self.width as usize + x as usize]
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> image::ImageResult<()> {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width, self.height, self.ids.clone()).expect("buffer size matches");
        buf.save_with_format(path, image::ImageFormat::Png)
    }

    pub fn load_png(path: impl AsRef<Path>) -> image::ImageResult<Self> {
        let img = image::open(path)?.into_luma16();
        let (width, height) = img.dimensions();
        Ok(Self { width, height, ids: img.into_raw() })
    }

    /// Rows containing at least one pixel with `id`, as `(first, last)`.
    pub fn row_span(&self, id: u16) -> Option<(u32, u32)> {
        let w = self.width as usize;
        let rows: Vec<u32> =
            (0..self.height).filter(|&y| self.ids[y as usize * w..(y as usize + 1) * w].contains(&id)).collect();
        Some((*rows.first()?, *rows.last()?))
    }
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    Object(usize),
    Ground,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    normal: Vec3,
    surface: Surface,
}

/// Nearest root of `|o + t d - c|² = r²` above `T_MIN`, `d` unit length.
fn intersect_sphere(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    // q = -(b + sign(b) sqrt(disc)); roots are q and c / q.
    let q = -(b + disc.sqrt().copysign(b));
    if q == 0.0 {
        return None;
    }
    let (t0, t1) = {
        let (a, b) = (q, c / q);
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    };
    [t0, t1].into_iter().find(|&t| t > T_MIN)
}

/// Slab test. Returns the entry distance, or the exit distance when the
/// origin lies inside, with the outward normal of the face crossed.
fn intersect_box(origin: Vec3, dir: Vec3, min: Vec3, max: Vec3) -> Option<(f64, Vec3)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0;
    let mut far_axis = 0;
    let mut near_sign = 0.0;
    let mut far_sign = 0.0;
    for axis in 0..3 {
        let (o, d, lo, hi) = (origin[axis], dir[axis], min[axis], max[axis]);
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut t0, mut t1) = ((lo - o) * inv, (hi - o) * inv);
        // Entering through the min face has outward normal -axis.
        let (mut s0, mut s1) = (-1.0, 1.0);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
            std::mem::swap(&mut s0, &mut s1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = axis;
            near_sign = s0;
        }
        if t1 < t_far {
            t_far = t1;
            far_axis = axis;
            far_sign = s1;
        }
        if t_near > t_far {
            return None;
        }
    }
    let axis_vec = |axis: usize, s: f64| match axis {
        0 => Vec3::new(s, 0.0, 0.0),
        1 => Vec3::new(0.0, s, 0.0),
        _ => Vec3::new(0.0, 0.0, s),
    };
    if t_near > T_MIN {
        Some((t_near, axis_vec(near_axis, near_sign)))
    } else if t_far > T_MIN {
        Some((t_far, axis_vec(far_axis, far_sign)))
    } else {
        None
    }
}

fn trace(scene: &Scene, origin: Vec3, dir: Vec3, t_max: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut consider = |h: Hit| {
        if h.t < t_max && best.is_none_or(|b| h.t < b.t) {
            best = Some(h);
        }
    };
    for (i, obj) in scene.objects.iter().enumerate() {
        match &obj.primitive {
            Some(Primitive::Sphere { center, radius }) => {
                if let Some(t) = intersect_sphere(origin, dir, *center, *radius) {
                    let normal = (origin + dir * t - *center) / *radius;
                    consider(Hit { t, normal, surface: Surface::Object(i) });
                }
            }
            Some(Primitive::Box { aabb }) => {
                if let Some((t, normal)) = intersect_box(origin, dir, aabb.min, aabb.max) {
                    consider(Hit { t, normal, surface: Surface::Object(i) });
                }
            }
            None => {}
        }
    }
    if let Some(g) = &scene.ground {
        if dir.z != 0.0 {
            let t = (g.height - origin.z) / dir.z;
            if t > T_MIN {
                consider(Hit { t, normal: Vec3::Z, surface: Surface::Ground });
            }
        }
    }
    best
}

fn ambient(scene: &Scene) -> Vec3 {
    scene.lights.iter().fold(Vec3::ZERO, |acc, l| match l {
        Light::Ambient { intensity } => acc + Vec3::from(*intensity),
        _ => acc,
    })
}

fn shade(scene: &Scene, origin: Vec3, dir: Vec3, hit: &Hit, ambient: Vec3) -> Vec3 {
    let p = origin + dir * hit.t;
    let n = if hit.normal.dot(dir) > 0.0 { -hit.normal } else { hit.normal };
    let albedo = Vec3::from(match hit.surface {
        Surface::Object(i) => scene.objects[i].albedo(),
        Surface::Ground => scene.ground.as_ref().map(|g| g.albedo).unwrap_or_default(),
    });
    let mut light = ambient;
    for l in &scene.lights {
        let (to_light, dist, intensity) = match l {
            Light::Point { position, intensity } => {
                let v = *position - p;
                let d = v.length();
                if d == 0.0 {
                    continue;
                }
                (v / d, d, intensity)
            }
            Light::Directional { direction, intensity } => match direction.try_normalize() {
                Some(d) => (-d, f64::INFINITY, intensity),
                None => continue,
            },
            Light::Ambient { .. } => continue,
        };
        let cos = n.dot(to_light);
        if cos <= 0.0 || trace(scene, p, to_light, dist).is_some() {
            continue;
        }
        light += Vec3::from(*intensity) * cos;
    }
    albedo.mul_elem(light)
}

fn encode(linear: f64) -> u8 {
    (255.0 * linear.clamp(0.0, 1.0).powf(1.0 / GAMMA)).round() as u8
}

/// Render one view. Pixels are independent and assembled in index order, so
/// the output does not depend on how rows are scheduled across threads.
pub fn render_view(scene: &Scene, pose: &CameraPose) -> (RgbImage, SegMap) {
    let (w, h) = (pose.width, pose.height);
    let mut rgb = RgbImage::new(w, h);
    let mut seg = SegMap::new(w, h);
    let amb = ambient(scene);
    let background = [encode(amb.x), encode(amb.y), encode(amb.z)];
    rgb.pixels.par_chunks_mut(w as usize * 3).zip(seg.ids.par_chunks_mut(w as usize)).enumerate().for_each(
        |(y, (row, ids))| {
            for x in 0..w {
                let dir = pose.pixel_ray(x, y as u32);
                let dir = dir / dir.length();
                let px = match trace(scene, pose.position, dir, f64::INFINITY) {
                    Some(hit) => {
                        if let Surface::Object(i) = hit.surface {
                            ids[x as usize] = scene.objects[i].id as u16;
                        }
                        let c = shade(scene, pose.position, dir, &hit, amb);
                        [encode(c.x), encode(c.y), encode(c.z)]
                    }
                    None => background,
                };
                row[x as usize * 3..x as usize * 3 + 3].copy_from_slice(&px);
            }
        },
    );
    (rgb, seg)
}
