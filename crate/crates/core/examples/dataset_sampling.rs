//! Samples training records from a synthetic split and prints the first few.

use vlmtrack::rewards::ResponseMode;
use vlmtrack::sampler::{generate_dataset, read_records, DatasetOptions, SampleConfig};
use vlmtrack::synthetic::{write_dataset, SyntheticSpec};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let root = dir.path().join("train");
    write_dataset(&root, &SyntheticSpec::default())?;

    let cfg = SampleConfig {
        mode: ResponseMode::Think,
        seed: 7,
        ..SampleConfig::default()
    };
    let out = dir.path().join("records");
    let opts = DatasetOptions { sft: true, skip_images: false };
    let manifest = generate_dataset(&root, 20, &cfg, &out, &opts)?;
    println!("{} records from {} sequences", manifest.written, manifest.sequences);

    for r in read_records(out.join("records.jsonl"))?.iter().take(3) {
        println!(
            "{} frames {}->{}  res {}  gt {:?}  answer {}",
            r.seq,
            r.frame_t,
            r.frame_s,
            r.resolution,
            r.gt_bbox,
            r.answer()
        );
    }
    Ok(())
}
