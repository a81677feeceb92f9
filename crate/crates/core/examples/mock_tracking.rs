//! Tracks synthetic sequences with the ground-truth oracle and scores the result.
//!
//! cargo run --example mock_tracking -- [noise_px] [format_error_rate]

use std::env;

use vlmtrack::eval::{evaluate, SequenceResult};
use vlmtrack::rewards::ResponseMode;
use vlmtrack::sampler::load_got10k;
use vlmtrack::synthetic::{write_dataset, SyntheticSpec};
use vlmtrack::tracker::{run_sequence, Init, MockBackend, TrackerConfig};

fn main() -> anyhow::Result<()> {
    let mut args = env::args().skip(1);
    let noise: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let error_rate: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.0);

    let dir = tempfile::tempdir()?;
    write_dataset(dir.path(), &SyntheticSpec::default())?;
    let cfg = TrackerConfig::default();

    let mut results = Vec::new();
    for seq in load_got10k(dir.path())? {
        let backend = MockBackend::new(seq.boxes.clone(), noise, error_rate, ResponseMode::NoThink, 1);
        let run = run_sequence(&seq.frames, &Init::Box(seq.boxes[0]), &backend, &cfg)?;
        results.push(SequenceResult {
            name: seq.name.clone(),
            predictions: run.boxes,
            ground_truth: seq.boxes.clone(),
            absent: seq.absent.clone(),
            latencies: Some(run.latencies),
        });
    }
    let report = evaluate(&results)?;
    for s in &report.per_sequence {
        println!("{}  mean IoU {:.4}", s.name, s.mean_iou);
    }
    println!("AO {:.4}  SR@0.5 {:.4}  SR@0.75 {:.4}", report.ao, report.sr_050, report.sr_075);
    Ok(())
}
