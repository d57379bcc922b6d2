//! Regenerates the bundled scenarios: `cargo run --example make_scenes -- scenes/`

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenes".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, recipe) in curbside::synth::bundled() {
        let path = dir.join(format!("{name}.scn"));
        curbside::scene::save_scene(&recipe.build(), &path)?;
        println!("{}", path.display());
    }
    Ok(())
}
