//! Scores a few responses against one ground-truth box in both modes.

use vlmtrack::geometry::BBox;
use vlmtrack::rewards::{overall_reward, RewardConfig, ResponseMode};

fn main() -> anyhow::Result<()> {
    let gt = BBox::new(100.0, 150.0, 140.0, 200.0)?;
    let think = format!("<think>{}</think><answer>[101, 150, 140, 199]</answer>", "reason ".repeat(600));
    let cases = [
        (ResponseMode::NoThink, "[100, 150, 140, 200]".to_string()),
        (ResponseMode::NoThink, "[110, 160, 150, 210]".to_string()),
        (ResponseMode::NoThink, "the target moved left".to_string()),
        (ResponseMode::Think, "<think>same car</think><answer>[100, 150, 140, 200]</answer>".to_string()),
        (ResponseMode::Think, think),
    ];
    for (mode, text) in cases {
        let cfg = RewardConfig::with_mode(mode);
        let r = overall_reward(&text, &gt, &cfg)?;
        let shown: String = text.chars().take(48).collect();
        println!(
            "{mode:>7}  overall {:+.3}  answer {:+.3}  length {:+.3}  {:?}  {shown:?}",
            r.r_overall, r.r_answer, r.r_length, r.override_
        );
    }
    Ok(())
}
