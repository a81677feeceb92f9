//! Desk-scale GRPO loop: sample a group per query, score every response with
//! the rule-based reward, normalize within the group and ascend the objective.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::group_kl;
use super::{batch_gradient, batch_objective, GrpoConfig, Rollout, RolloutGroup, ToyPolicy};
use crate::error::GrpoError;
use crate::geometry::BBox;
use crate::rewards::{overall_reward, ResponseMode, RewardConfig};
use crate::rng::derive_rng;

const OBS_DIM: usize = 4;
const INIT_SCALE: f64 = 0.01;

/// One synthetic query: a ground-truth box and its noisy normalized encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyQuery {
    pub gt: BBox,
    pub observation: Vec<f64>,
}

/// One line of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub mean_reward: f64,
    pub kl: f64,
    pub objective: f64,
}

/// Draws a box covering 15-50% of each side of the output square.
pub fn sample_query<R: Rng + ?Sized>(rng: &mut R, output_size: u32, obs_noise: f64) -> ToyQuery {
    let size = output_size as f64;
    let w = rng.random_range(0.15..0.5) * size;
    let h = rng.random_range(0.15..0.5) * size;
    let x0 = rng.random_range(0.0..size - w);
    let y0 = rng.random_range(0.0..size - h);
    let gt = BBox::new(x0, y0, x0 + w, y0 + h).expect("box inside output square");
    let mut observation: Vec<f64> = gt.to_array().iter().map(|c| c / size).collect();
    if obs_noise > 0.0 {
        let normal = Normal::new(0.0, obs_noise).expect("finite noise");
        for o in &mut observation {
            *o += normal.sample(rng);
        }
    }
    ToyQuery { gt, observation }
}

fn rollout_group(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    cfg: &GrpoConfig,
    reward_cfg: &RewardConfig,
    iteration: usize,
    query_index: usize,
) -> Result<RolloutGroup, GrpoError> {
    let mut rng = derive_rng(cfg.seed, &[1, iteration as u64, query_index as u64]);
    let query = sample_query(&mut rng, cfg.output_size, cfg.obs_noise);
    let obs = &query.observation;
    let mut responses = Vec::with_capacity(cfg.group_size);
    for _ in 0..cfg.group_size {
        let tokens = policy.sample(obs, &mut rng)?;
        let text = policy.render(&tokens);
        let reward = overall_reward(&text, &query.gt, reward_cfg)
            .map_err(|e| GrpoError::Shape(e.to_string()))?
            .r_overall;
        responses.push(Rollout {
            logp_old: policy.token_log_probs(obs, &tokens)?,
            logp_ref: reference.token_log_probs(obs, &tokens)?,
            tokens,
            reward,
        });
    }
    Ok(RolloutGroup {
        reference: reference.distributions(obs)?,
        observation: query.observation,
        responses,
    })
}

fn evaluate(
    groups: &[RolloutGroup],
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
    iteration: usize,
) -> Result<TracePoint, GrpoError> {
    let n: usize = groups.iter().map(RolloutGroup::size).sum();
    let mean_reward = groups
        .iter()
        .flat_map(|g| g.responses.iter().map(|r| r.reward))
        .sum::<f64>()
        / n as f64;
    let mut kl = 0.0;
    for g in groups {
        kl += group_kl(&policy.distributions(&g.observation)?, &g.reference, cfg.kl_reduction)?;
    }
    Ok(TracePoint {
        iteration,
        mean_reward,
        kl: kl / groups.len() as f64,
        objective: batch_objective(groups, policy, cfg)?,
    })
}

/// Runs the toy trainer and returns one trace point per evaluation.
///
/// Point `t` is measured on a fresh batch sampled after `t` updates, so
/// `iterations = 0` yields only the initial evaluation. The reference policy is
/// the initial policy. Rollouts use per-(iteration, query) RNG streams, so the
/// trace does not depend on the rayon thread count.
pub fn toy_train(cfg: &GrpoConfig) -> Result<(Vec<TracePoint>, ToyPolicy), GrpoError> {
    cfg.validate()?;
    let reward_cfg = RewardConfig::with_mode(ResponseMode::NoThink);
    let mut init_rng = derive_rng(cfg.seed, &[0]);
    let reference = ToyPolicy::random(OBS_DIM, cfg.bins, cfg.output_size, INIT_SCALE, &mut init_rng);
    let mut policy = reference.clone();
    let mut trace = Vec::with_capacity(cfg.iterations + 1);

    for iteration in 0..=cfg.iterations {
        let groups = (0..cfg.queries_per_iter)
            .into_par_iter()
            .map(|q| rollout_group(&policy, &reference, cfg, &reward_cfg, iteration, q))
            .collect::<Result<Vec<_>, _>>()?;
        trace.push(evaluate(&groups, &policy, cfg, iteration)?);
        if iteration == cfg.iterations {
            break;
        }
        let mut grad = batch_gradient(&groups, &policy, cfg)?;
        if let Some(max_norm) = cfg.max_grad_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max_norm {
                let s = max_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        for (w, g) in policy.params_mut().iter_mut().zip(&grad) {
            *w += cfg.learning_rate * g;
        }
    }
    Ok((trace, policy))
}

/// Writes the trace as JSON lines.
pub fn write_trace<W: Write>(trace: &[TracePoint], mut out: W) -> std::io::Result<()> {
    for p in trace {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
