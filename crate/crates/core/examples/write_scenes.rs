//! Regenerate the bundled scene files: `cargo run --example write_scenes -- scenes`.

use blendforge_core::procedural::{cluttered_scene, desk_scene};
use blendforge_core::save_scene;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "scenes".into());
    save_scene(&desk_scene(), format!("{dir}/desk.json")).expect("write desk.json");
    save_scene(&cluttered_scene(4, 7), format!("{dir}/cluttered.json")).expect("write cluttered.json");
}
