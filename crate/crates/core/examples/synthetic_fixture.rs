//! Writes a small synthetic GOT-10k style split.
//!
//! cargo run --example synthetic_fixture -- /tmp/synth [sequences] [frames]

use std::env;

use vlmtrack::synthetic::{write_dataset, SyntheticSpec};

fn main() -> anyhow::Result<()> {
    let mut args = env::args().skip(1);
    let root = args.next().unwrap_or_else(|| "synthetic".into());
    let mut spec = SyntheticSpec::default();
    if let Some(n) = args.next() {
        spec.sequences = n.parse()?;
    }
    if let Some(n) = args.next() {
        spec.frames = n.parse()?;
    }
    let tracks = write_dataset(&root, &spec)?;
    println!("wrote {} sequences of {} frames to {root}", tracks.len(), spec.frames);
    Ok(())
}
