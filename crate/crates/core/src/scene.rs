//! Scene model: object bounding boxes for pose generation plus optional
//! renderable primitives, materials and lights for the raycaster.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SceneError;
use crate::geom::{Aabb, Vec3};

/// Linear RGB triple, nominally in `[0, 1]` for albedo and unbounded for light intensity.
pub type Rgb = [f64; 3];

/// Albedo used when an object carries no material.
pub const DEFAULT_ALBEDO: Rgb = [0.8, 0.8, 0.8];

/// Closed-form shapes the renderer can intersect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64 },
    Box { aabb: Aabb },
}

impl Primitive {
    pub fn bounds(&self) -> Aabb {
        match self {
            Primitive::Sphere { center, radius } => Aabb::from_center_half_extent(*center, Vec3::splat(*radius)),
            Primitive::Box { aabb } => *aabb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub albedo: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub name: String,
    pub aabb: Aabb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<Primitive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<Material>,
}

impl SceneObject {
    /// Object with a sphere primitive and matching bounding box.
    pub fn sphere(id: u32, name: &str, center: Vec3, radius: f64, albedo: Rgb) -> Self {
        let primitive = Primitive::Sphere { center, radius };
        Self {
            id,
            name: name.to_string(),
            aabb: primitive.bounds(),
            primitive: Some(primitive),
            material: Some(Material { albedo }),
        }
    }

    /// Object with a box primitive equal to its bounding box.
    pub fn cuboid(id: u32, name: &str, aabb: Aabb, albedo: Rgb) -> Self {
        Self {
            id,
            name: name.to_string(),
            aabb,
            primitive: Some(Primitive::Box { aabb }),
            material: Some(Material { albedo }),
        }
    }

    pub fn albedo(&self) -> Rgb {
        self.material.as_ref().map_or(DEFAULT_ALBEDO, |m| m.albedo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Light {
    Point {
        position: Vec3,
        intensity: Rgb,
    },
    /// `direction` is the direction the light travels (from the emitter into the scene).
    Directional {
        direction: Vec3,
        intensity: Rgb,
    },
    Ambient {
        intensity: Rgb,
    },
}

/// Infinite horizontal plane `z = height`. Rendered as background (segmentation id 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub height: f64,
    pub albedo: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub lights: Vec<Light>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground: Option<GroundPlane>,
    pub scene_aabb: Aabb,
}

/// On-disk form: identical to [`Scene`] except that `scene_aabb` may be omitted.
#[derive(Deserialize)]
struct SceneFile {
    name: String,
    objects: Vec<SceneObject>,
    #[serde(default)]
    lights: Vec<Light>,
    #[serde(default)]
    ground: Option<GroundPlane>,
    #[serde(default)]
    scene_aabb: Option<Aabb>,
}

impl Scene {
    /// Builds a scene, computing `scene_aabb` as the union of object boxes when
    /// no override is given, and validates it.
    pub fn new(
        name: impl Into<String>,
        objects: Vec<SceneObject>,
        lights: Vec<Light>,
        ground: Option<GroundPlane>,
        scene_aabb: Option<Aabb>,
    ) -> Result<Self, SceneError> {
        let scene_aabb = match scene_aabb {
            Some(b) => b,
            None => objects
                .iter()
                .map(|o| o.aabb)
                .reduce(|a, b| a.union(&b))
                .ok_or_else(|| SceneError::Validation("scene_aabb is required when there are no objects".into()))?,
        };
        let scene = Scene { name: name.into(), objects, lights, ground, scene_aabb };
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let f: SceneFile = serde_json::from_str(text)?;
        Scene::new(f.name, f.objects, f.lights, f.ground, f.scene_aabb)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization is infallible")
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let invalid = |msg: String| Err(SceneError::Validation(msg));
        if !self.scene_aabb.is_valid() {
            return invalid("scene_aabb is inverted or non-finite".into());
        }
        let mut seen = HashSet::new();
        for o in &self.objects {
            if o.id == 0 {
                return invalid(format!("object '{}' uses reserved id 0", o.name));
            }
            if o.id > u32::from(u16::MAX) {
                return invalid(format!("object id {} does not fit a 16-bit segmentation map", o.id));
            }
            if !seen.insert(o.id) {
                return invalid(format!("duplicate object id {}", o.id));
            }
            if !o.aabb.is_valid() {
                return invalid(format!("object {} has an inverted or non-finite aabb", o.id));
            }
            if !self.scene_aabb.contains_box(&o.aabb) {
                return invalid(format!("scene_aabb does not contain object {}", o.id));
            }
            match &o.primitive {
                Some(Primitive::Sphere { center, radius }) => {
                    if !center.is_finite() || !(radius.is_finite() && *radius > 0.0) {
                        return invalid(format!("object {} has an invalid sphere", o.id));
                    }
                    let b = Primitive::Sphere { center: *center, radius: *radius }.bounds();
                    let tol = 1e-6 * o.aabb.diagonal().max(1.0);
                    let dmin = (b.min - o.aabb.min).length();
                    let dmax = (b.max - o.aabb.max).length();
                    if dmin > tol || dmax > tol {
                        return invalid(format!("object {} sphere does not match its aabb", o.id));
                    }
                }
                Some(Primitive::Box { aabb }) if !aabb.is_valid() => {
                    return invalid(format!("object {} has an inverted box primitive", o.id));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SceneError::Io(path.display().to_string(), e))?;
    Scene::from_json(&text)
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    fs::write(path, scene.to_json() + "\n").map_err(|e| SceneError::Io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_SPHERE: &str = r#"{
        "name": "s",
        "objects": [{"id": 1, "name": "ball",
                     "aabb": {"min": [-1, -1, -1], "max": [1, 1, 1]},
                     "primitive": {"type": "sphere", "center": [0, 0, 0], "radius": 1}}],
        "lights": []
    }"#;

    #[test]
    fn scene_aabb_defaults_to_union() {
        let s = Scene::from_json(ONE_SPHERE).unwrap();
        assert_eq!(s.scene_aabb, Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"{"name":"d","objects":[
            {"id":1,"name":"a","aabb":{"min":[0,0,0],"max":[1,1,1]}},
            {"id":1,"name":"b","aabb":{"min":[0,0,0],"max":[1,1,1]}}]}"#;
        assert!(matches!(Scene::from_json(text), Err(SceneError::Validation(_))));
    }

    #[test]
    fn inverted_aabb_rejected() {
        let text = r#"{"name":"d","objects":[
            {"id":1,"name":"a","aabb":{"min":[2,0,0],"max":[1,0,0]}}]}"#;
        assert!(matches!(Scene::from_json(text), Err(SceneError::Validation(_))));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(Scene::from_json("{\"name\": 3"), Err(SceneError::Parse(_))));
        assert!(matches!(Scene::from_json(r#"{"name":"x"}"#), Err(SceneError::Parse(_))));
    }

    #[test]
    fn reserved_id_and_sphere_mismatch_rejected() {
        let zero = ONE_SPHERE.replace("\"id\": 1", "\"id\": 0");
        assert!(matches!(Scene::from_json(&zero), Err(SceneError::Validation(_))));
        let off = ONE_SPHERE.replace("\"radius\": 1", "\"radius\": 2");
        assert!(matches!(Scene::from_json(&off), Err(SceneError::Validation(_))));
    }

    #[test]
    fn explicit_scene_aabb_must_contain_objects() {
        let text =
            ONE_SPHERE.replace("\"lights\": []", "\"lights\": [], \"scene_aabb\": {\"min\":[0,0,0],\"max\":[1,1,1]}");
        assert!(matches!(Scene::from_json(&text), Err(SceneError::Validation(_))));
    }

    #[test]
    fn degenerate_object_box_is_legal() {
        let text = r#"{"name":"flat","objects":[
            {"id":3,"name":"plate","aabb":{"min":[0,0,0],"max":[1,1,0]}}]}"#;
        assert!(Scene::from_json(text).is_ok());
    }

    #[test]
    fn save_load_round_trip() {
        let s = Scene::from_json(ONE_SPHERE).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        save_scene(&s, &p).unwrap();
        assert_eq!(load_scene(&p).unwrap(), s);
    }
}
