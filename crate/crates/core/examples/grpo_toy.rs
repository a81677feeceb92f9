//! Trains the toy box policy and prints the reward curve.
//!
//! cargo run --release --example grpo_toy -- [beta] [token|sequence]

use std::env;

use vlmtrack::grpo::{toy_train, GrpoConfig};

fn main() -> anyhow::Result<()> {
    let mut args = env::args().skip(1);
    let mut cfg = GrpoConfig::default();
    if let Some(b) = args.next() {
        cfg.beta = b.parse()?;
    }
    if let Some(a) = args.next() {
        cfg.aggregation = a.parse().map_err(anyhow::Error::msg)?;
    }
    let (trace, _) = toy_train(&cfg)?;
    for p in trace.iter().step_by(20).chain(trace.last()) {
        println!(
            "iter {:>4}  reward {:+.4}  kl {:.4}  objective {:+.4}",
            p.iteration, p.mean_reward, p.kl, p.objective
        );
    }
    Ok(())
}
