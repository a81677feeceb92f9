//! Group relative policy optimization.
//!
//! The kernel here is model-agnostic in spirit but concrete in practice: the
//! objective and its analytic gradient are defined for [`ToyPolicy`], a
//! linear-softmax policy over binned box coordinates that stands in for a
//! language model so the whole optimization loop can run on a laptop.
//!
//! Advantages are computed per group of responses to one query:
//!
//! ```text
//! A_i = (r_i - mean(r)) / (std(r) + eps)
//! ```
//!
//! with the population standard deviation.

mod objective;
mod policy;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::GrpoError;

pub use objective::{
    batch_gradient, batch_objective, grpo_gradient, grpo_objective, Rollout, RolloutGroup,
};
pub use policy::{ToyPolicy, COORDS};
pub use train::{sample_query, toy_train, write_trace, ToyQuery, TracePoint};

/// How per-response ratio terms are pooled in the surrogate objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `sum_i ratio(o_i) * A_i` with whole-sequence probability ratios.
    #[default]
    #[serde(alias = "sequence")]
    SequenceLevel,
    /// Per-token `ratio * A_i` averaged over every token in the group.
    #[serde(alias = "token")]
    TokenLevel,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequence" | "sequence_level" => Ok(Aggregation::SequenceLevel),
            "token" | "token_level" => Ok(Aggregation::TokenLevel),
            other => Err(format!("unknown aggregation `{other}` (expected sequence or token)")),
        }
    }
}

/// How per-position KL terms are reduced to one penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlReduction {
    #[default]
    TokenMean,
    SequenceSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    /// KL penalty coefficient.
    pub beta: f64,
    pub std_epsilon: f64,
    pub aggregation: Aggregation,
    pub kl_reduction: KlReduction,
    /// PPO-style ratio clipping; `None` keeps the plain surrogate.
    pub clip_ratio: Option<f64>,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub group_size: usize,
    /// Queries (groups) per update.
    pub queries_per_iter: usize,
    /// Coordinate bins per box side.
    pub bins: usize,
    pub output_size: u32,
    /// Std-dev of the Gaussian noise added to the normalized observation.
    pub obs_noise: f64,
    /// Global gradient-norm cap applied before each step; `None` disables it.
    pub max_grad_norm: Option<f64>,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            beta: 0.04,
            std_epsilon: 1e-8,
            aggregation: Aggregation::SequenceLevel,
            kl_reduction: KlReduction::TokenMean,
            clip_ratio: None,
            learning_rate: 0.5,
            iterations: 200,
            seed: 0,
            group_size: 8,
            queries_per_iter: 32,
            bins: 16,
            output_size: 336,
            obs_noise: 0.05,
            max_grad_norm: Some(5.0),
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: String| Err(GrpoError::InvalidConfig(m));
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if !(self.std_epsilon > 0.0) {
            return bad(format!("std_epsilon must be > 0, got {}", self.std_epsilon));
        }
        if let Some(eps) = self.clip_ratio {
            if !(eps > 0.0 && eps < 1.0) {
                return bad(format!("clip_ratio must be in (0, 1), got {eps}"));
            }
        }
        if self.group_size < 2 {
            return bad(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if self.bins < 2 || self.queries_per_iter == 0 || self.output_size == 0 {
            return bad("bins >= 2, queries_per_iter >= 1 and output_size >= 1 required".into());
        }
        if !(self.learning_rate > 0.0) || !(self.obs_noise >= 0.0) {
            return bad("learning_rate must be > 0 and obs_noise >= 0".into());
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                return bad(format!("max_grad_norm must be > 0, got {n}"));
            }
        }
        Ok(())
    }
}

/// Group-normalized advantages with population std and an additive epsilon.
pub fn group_advantages(rewards: &[f64], std_epsilon: f64) -> Result<Vec<f64>, GrpoError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let denom = var.sqrt() + std_epsilon;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// `KL(p || q) = sum p ln(p / q)`, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, GrpoError> {
    if p.len() != q.len() {
        return Err(GrpoError::SupportMismatch(p.len(), q.len()));
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if !(qi > 0.0) {
                return Err(GrpoError::ZeroReferenceMass(i));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}
