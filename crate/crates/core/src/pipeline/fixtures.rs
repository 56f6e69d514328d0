//! Inputs for end-to-end runs on the desk scene with scripted VLM replies.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stages::object_poses;
use crate::camgen::CameraSettings;
use crate::embfile::{write_aesthetic, write_embeddings, AestheticLine, EmbeddingSet};
use crate::procedural::desk_scene;
use crate::scene::save_scene;

const EMB_DIM: usize = 16;

fn id_seed(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

/// Image embeddings, caption embeddings close to them, and aesthetic scores,
/// all derived from the image id. Every seventh image scores below the
/// default aesthetic threshold.
fn write_score_inputs(dir: &Path, ids: &[String]) {
    let mut image = Vec::new();
    let mut text = Vec::new();
    let mut aesthetic = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(id_seed(id));
        let v: Vec<f32> = (0..EMB_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        text.extend(v.iter().map(|x| x + rng.gen_range(-0.1..0.1)));
        image.extend(v);
        let score = if i % 7 == 3 { 2.5 } else { rng.gen_range(4.0..7.0) };
        aesthetic.push(AestheticLine { id: id.clone(), aesthetic: score });
    }
    write_embeddings(dir.join("image"), &EmbeddingSet::new(EMB_DIM, ids.to_vec(), image).unwrap()).unwrap();
    write_embeddings(dir.join("text"), &EmbeddingSet::new(EMB_DIM, ids.to_vec(), text).unwrap()).unwrap();
    write_aesthetic(dir.join("aesthetic.jsonl"), &aesthetic).unwrap();
}

/// Stub replies: `bad` ids get a BAD verdict, everything else a GOOD one.
fn write_filter_stub(path: &Path, bad: &[String], flaky: Option<&str>) {
    let mut map = BTreeMap::new();
    map.insert("*".to_string(), serde_json::json!("GOOD: clear object with visible context"));
    for id in bad {
        map.insert(id.clone(), serde_json::json!("BAD: extreme close-up of surface"));
    }
    if let Some(id) = flaky {
        map.insert(id.to_string(), serde_json::json!(["I am not sure.", "GOOD: recognizable object after retry"]));
    }
    fs::write(path, serde_json::to_string_pretty(&map).unwrap()).unwrap();
}

fn write_caption_stub(path: &Path) {
    let map = serde_json::json!({ "*": "A wooden desk holding a blue book, a white mug and a small green globe." });
    fs::write(path, map.to_string()).unwrap();
}

/// Inputs for a full desk run in `inputs`, and a config that writes to `out`.
pub(crate) fn desk_config(inputs: &Path, out: &Path) -> PathBuf {
    fs::create_dir_all(inputs).unwrap();
    let scene = desk_scene();
    let scene_file = inputs.join("desk.json");
    save_scene(&scene, &scene_file).unwrap();
    let ids: Vec<String> =
        object_poses(&scene, &CameraSettings::default()).unwrap().into_iter().map(|p| p.id).collect();
    write_score_inputs(inputs, &ids);
    let bad: Vec<String> = ids.iter().step_by(5).cloned().collect();
    write_filter_stub(&inputs.join("filter_stub.json"), &bad, Some("desk/3/2"));
    write_caption_stub(&inputs.join("caption_stub.json"));
    let toml = format!(
        r#"scene = {scene:?}
out_dir = {out:?}

[stage.filter-vlm]
stub = "filter_stub.json"

[stage.caption]
stub = "caption_stub.json"

[stage.score]
image_emb = "image"
text_emb = "text"
aesthetic = "aesthetic.jsonl"

[stage.sample]
splits = "train:0.6,val:0.2,test:0.2"
"#,
        scene = scene_file.display().to_string(),
        out = out.display().to_string(),
    );
    let path = inputs.join(format!("{}.toml", out.file_name().unwrap().to_string_lossy()));
    fs::write(&path, toml).unwrap();
    path
}
