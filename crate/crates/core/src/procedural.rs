//! Small built-in scenes for demos, tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{Aabb, Vec3};
use crate::scene::{GroundPlane, Light, Scene, SceneObject};

fn sun_and_fill() -> Vec<Light> {
    vec![
        Light::Directional { direction: Vec3::new(-0.4, -0.6, -1.0), intensity: [0.75, 0.72, 0.68] },
        Light::Point { position: Vec3::new(-1.5, -2.5, 3.0), intensity: [0.35, 0.35, 0.4] },
        Light::Ambient { intensity: [0.18, 0.18, 0.2] },
    ]
}

/// An office corner: a desk with a few items on it and a closed cabinet.
/// The cabinet hides a pole (object 7), so every view of the pole is
/// occluded.
pub fn desk_scene() -> Scene {
    let b = |x0, y0, z0, x1, y1, z1| Aabb::new(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1));
    let objects = vec![
        SceneObject::cuboid(1, "desk", b(-1.0, -0.5, 0.0, 1.0, 0.5, 0.75), [0.55, 0.38, 0.22]),
        SceneObject::cuboid(2, "book", b(-0.6, -0.2, 0.75, -0.25, 0.15, 0.82), [0.2, 0.3, 0.7]),
        SceneObject::sphere(3, "globe", Vec3::new(0.55, 0.1, 0.95), 0.2, [0.3, 0.65, 0.4]),
        SceneObject::cuboid(4, "mug", b(0.05, -0.3, 0.75, 0.15, -0.2, 0.87), [0.85, 0.85, 0.8]),
        SceneObject::sphere(5, "ball", Vec3::new(-1.6, -0.9, 0.25), 0.25, [0.85, 0.2, 0.15]),
        SceneObject::cuboid(6, "cabinet", b(1.6, -0.4, 0.0, 2.4, 0.4, 1.2), [0.5, 0.5, 0.55]),
        SceneObject::cuboid(7, "pole", b(1.95, -0.05, 0.1, 2.05, 0.05, 1.1), [0.9, 0.8, 0.1]),
    ];
    let ground = GroundPlane { height: 0.0, albedo: [0.6, 0.6, 0.6] };
    Scene::new("desk", objects, sun_and_fill(), Some(ground), None).expect("desk scene is valid")
}

/// A dense pile of crates and balls on a `side x side` grid with little
/// spacing between them. Layout is fixed by `seed`.
pub fn cluttered_scene(side: u32, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects = Vec::new();
    let pitch = 0.5;
    for j in 0..side {
        for i in 0..side {
            let id = 1 + i + side * j;
            let cx = (i as f64 - (side - 1) as f64 / 2.0) * pitch;
            let cy = (j as f64 - (side - 1) as f64 / 2.0) * pitch;
            let albedo = [rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9)];
            if rng.gen_bool(0.35) {
                let r = rng.gen_range(0.1..0.24);
                objects.push(SceneObject::sphere(id, &format!("ball_{id}"), Vec3::new(cx, cy, r), r, albedo));
            } else {
                let hx = rng.gen_range(0.1..0.24);
                let hy = rng.gen_range(0.1..0.24);
                let h = rng.gen_range(0.2..0.9);
                let aabb = Aabb::new(Vec3::new(cx - hx, cy - hy, 0.0), Vec3::new(cx + hx, cy + hy, h));
                objects.push(SceneObject::cuboid(id, &format!("crate_{id}"), aabb, albedo));
            }
        }
    }
    let ground = GroundPlane { height: 0.0, albedo: [0.45, 0.45, 0.42] };
    Scene::new(format!("cluttered_{side}x{side}"), objects, sun_and_fill(), Some(ground), None)
        .expect("cluttered scene is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_match_builders() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenes");
        let desk = crate::scene::load_scene(format!("{dir}/desk.json")).unwrap();
        assert_eq!(desk, desk_scene());
        let clutter = crate::scene::load_scene(format!("{dir}/cluttered.json")).unwrap();
        assert_eq!(clutter, cluttered_scene(4, 7));
    }

    #[test]
    fn pole_is_inside_cabinet() {
        let s = desk_scene();
        assert!(s.object(6).unwrap().aabb.contains_box(&s.object(7).unwrap().aabb));
    }

    #[test]
    fn clutter_is_deterministic() {
        assert_eq!(cluttered_scene(3, 1), cluttered_scene(3, 1));
        assert_eq!(cluttered_scene(3, 1).objects.len(), 9);
    }
}
