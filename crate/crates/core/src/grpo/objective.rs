//! Surrogate objective and its analytic gradient for [`ToyPolicy`].
//!
//! For a group of `g` responses to one query, with advantages `A_i`:
//!
//! - sequence level: `J = sum_i s(rho_i, A_i) - beta * KL`, where
//!   `rho_i = pi(o_i) / pi_old(o_i)` over the whole response;
//! - token level: `J = (1 / N) sum_i sum_t s(rho_it, A_i) - beta * KL`, with
//!   `N` the number of tokens pooled across the group;
//!
//! `s(rho, A) = rho * A`, or `min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)`
//! when clipping is enabled. `KL` is the exact `KL(pi || pi_ref)` of the
//! per-coordinate categoricals at the query, averaged or summed over positions.

use serde::{Deserialize, Serialize};

use super::policy::{check_tokens, COORDS};
use super::{group_advantages, kl_divergence, Aggregation, GrpoConfig, KlReduction, ToyPolicy};
use crate::error::GrpoError;

/// One sampled response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// Sampled bin per coordinate.
    pub tokens: Vec<usize>,
    pub reward: f64,
    /// Per-token log-probabilities under the sampling policy.
    pub logp_old: Vec<f64>,
    /// Per-token log-probabilities under the reference policy.
    pub logp_ref: Vec<f64>,
}

impl Rollout {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

/// `g` responses to the same query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub observation: Vec<f64>,
    pub responses: Vec<Rollout>,
    /// Reference-policy distribution of each coordinate at this query.
    pub reference: Vec<Vec<f64>>,
}

impl RolloutGroup {
    pub fn size(&self) -> usize {
        self.responses.len()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.reward).collect()
    }

    fn validate(&self, policy: &ToyPolicy) -> Result<(), GrpoError> {
        if self.reference.len() != COORDS {
            return Err(GrpoError::Shape(format!(
                "reference has {} positions, expected {COORDS}",
                self.reference.len()
            )));
        }
        for r in &self.responses {
            check_tokens(&r.tokens, policy.bins())?;
            if r.logp_old.len() != r.tokens.len() || r.logp_ref.len() != r.tokens.len() {
                return Err(GrpoError::Shape("log-prob length differs from token count".into()));
            }
        }
        Ok(())
    }
}

/// Surrogate term and its derivative with respect to the ratio.
fn surrogate(ratio: f64, adv: f64, clip: Option<f64>) -> (f64, f64) {
    let plain = ratio * adv;
    match clip {
        None => (plain, adv),
        Some(eps) => {
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
            if clipped < plain {
                (clipped, 0.0)
            } else {
                (plain, adv)
            }
        }
    }
}

fn kl_weight(reduction: KlReduction) -> f64 {
    match reduction {
        KlReduction::TokenMean => 1.0 / COORDS as f64,
        KlReduction::SequenceSum => 1.0,
    }
}

/// Reduced `KL(pi || pi_ref)` at the group's query.
pub(crate) fn group_kl(
    dists: &[Vec<f64>],
    reference: &[Vec<f64>],
    reduction: KlReduction,
) -> Result<f64, GrpoError> {
    let mut total = 0.0;
    for (p, q) in dists.iter().zip(reference) {
        total += kl_divergence(p, q)?;
    }
    Ok(total * kl_weight(reduction))
}

/// Objective value, gradient per coordinate logit, and the feature vector.
type LogitGrad = (f64, Vec<Vec<f64>>, Vec<f64>);

fn objective_and_logit_grad(
    group: &RolloutGroup,
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
) -> Result<LogitGrad, GrpoError> {
    group.validate(policy)?;
    let adv = group_advantages(&group.rewards(), cfg.std_epsilon)?;
    let x = policy.features(&group.observation)?;
    let dists = policy.distributions_from_features(&x);
    let bins = policy.bins();
    let mut dz = vec![vec![0.0; bins]; COORDS];
    let mut value = 0.0;

    // d rho / d z_k = rho * (onehot(a_k) - p_k)
    let accumulate = |k: usize, token: usize, coeff: f64, dz: &mut Vec<Vec<f64>>| {
        for (j, (g, p)) in dz[k].iter_mut().zip(&dists[k]).enumerate() {
            let onehot = if j == token { 1.0 } else { 0.0 };
            *g += coeff * (onehot - p);
        }
    };

    match cfg.aggregation {
        Aggregation::SequenceLevel => {
            for (resp, &a) in group.responses.iter().zip(&adv) {
                let log_ratio: f64 = resp
                    .tokens
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| dists[k][t].ln() - resp.logp_old[k])
                    .sum();
                let ratio = log_ratio.exp();
                let (v, dv) = surrogate(ratio, a, cfg.clip_ratio);
                value += v;
                if dv != 0.0 {
                    for (k, &t) in resp.tokens.iter().enumerate() {
                        accumulate(k, t, dv * ratio, &mut dz);
                    }
                }
            }
        }
        Aggregation::TokenLevel => {
            let n_tokens: usize = group.responses.iter().map(Rollout::token_count).sum();
            let norm = 1.0 / n_tokens as f64;
            for (resp, &a) in group.responses.iter().zip(&adv) {
                for (k, &t) in resp.tokens.iter().enumerate() {
                    let ratio = (dists[k][t].ln() - resp.logp_old[k]).exp();
                    let (v, dv) = surrogate(ratio, a, cfg.clip_ratio);
                    value += norm * v;
                    if dv != 0.0 {
                        accumulate(k, t, norm * dv * ratio, &mut dz);
                    }
                }
            }
        }
    }

    if cfg.beta > 0.0 {
        let w = kl_weight(cfg.kl_reduction);
        let mut kl_total = 0.0;
        for k in 0..COORDS {
            let p = &dists[k];
            let q = &group.reference[k];
            let kl_k = kl_divergence(p, q)?;
            kl_total += kl_k;
            // d KL / d z_m = p_m (ln p_m - ln q_m - KL)
            for m in 0..bins {
                let grad = p[m] * (p[m].ln() - q[m].ln() - kl_k);
                dz[k][m] -= cfg.beta * w * grad;
            }
        }
        value -= cfg.beta * w * kl_total;
    }
    Ok((value, dz, x))
}

pub fn grpo_objective(
    group: &RolloutGroup,
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
) -> Result<f64, GrpoError> {
    objective_and_logit_grad(group, policy, cfg).map(|(v, _, _)| v)
}

/// Analytic gradient of [`grpo_objective`] with respect to the policy parameters.
pub fn grpo_gradient(
    group: &RolloutGroup,
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
) -> Result<Vec<f64>, GrpoError> {
    let (_, dz, x) = objective_and_logit_grad(group, policy, cfg)?;
    let mut grad = vec![0.0; policy.params().len()];
    for (k, dzk) in dz.iter().enumerate() {
        for (j, &d) in dzk.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (f, &xf) in x.iter().enumerate() {
                grad[policy.index(k, j, f)] += d * xf;
            }
        }
    }
    Ok(grad)
}

/// Mean objective over several groups.
pub fn batch_objective(
    groups: &[RolloutGroup],
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
) -> Result<f64, GrpoError> {
    if groups.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for g in groups {
        total += grpo_objective(g, policy, cfg)?;
    }
    Ok(total / groups.len() as f64)
}

/// Gradient of [`batch_objective`].
pub fn batch_gradient(
    groups: &[RolloutGroup],
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
) -> Result<Vec<f64>, GrpoError> {
    let mut grad = vec![0.0; policy.params().len()];
    if groups.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / groups.len() as f64;
    for g in groups {
        for (acc, v) in grad.iter_mut().zip(grpo_gradient(g, policy, cfg)?) {
            *acc += scale * v;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(beta: f64, aggregation: Aggregation) -> GrpoConfig {
        GrpoConfig {
            beta,
            aggregation,
            ..GrpoConfig::default()
        }
    }

    fn group_for(policy: &ToyPolicy, reference: &ToyPolicy, obs: &[f64], rewards: &[f64], rng: &mut ChaCha8Rng) -> RolloutGroup {
        let responses = rewards
            .iter()
            .map(|&reward| {
                let tokens = policy.sample(obs, rng).unwrap();
                Rollout {
                    logp_old: policy.token_log_probs(obs, &tokens).unwrap(),
                    logp_ref: reference.token_log_probs(obs, &tokens).unwrap(),
                    tokens,
                    reward,
                }
            })
            .collect();
        RolloutGroup {
            observation: obs.to_vec(),
            responses,
            reference: reference.distributions(obs).unwrap(),
        }
    }

    #[test]
    fn on_policy_identity_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = ToyPolicy::random(4, 6, 336, 1.0, &mut rng);
        let obs = [0.2, 0.3, 0.5, 0.7];
        let rewards: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..2.0)).collect();
        let g = group_for(&p, &p, &obs, &rewards, &mut rng);
        for agg in [Aggregation::SequenceLevel, Aggregation::TokenLevel] {
            let v = grpo_objective(&g, &p, &cfg(0.0, agg)).unwrap();
            assert!(v.abs() < 1e-12, "{agg:?}: {v}");
        }
    }

    #[test]
    fn zero_advantage_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ToyPolicy::random(4, 6, 336, 1.0, &mut rng);
        let obs = [0.1, 0.1, 0.4, 0.4];
        let g = group_for(&p, &p, &obs, &[0.5; 4], &mut rng);
        let grad = grpo_gradient(&g, &p, &cfg(0.0, Aggregation::SequenceLevel)).unwrap();
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    /// Hand-built single-token-per-coordinate instance with known ratios.
    #[test]
    fn sequence_level_hand_example() {
        let p = ToyPolicy::zeros(1, 2, 336);
        let uniform = p.distributions(&[0.0]).unwrap();
        let ln_half = 0.5f64.ln();
        // ratio_i = exp(sum_k (ln 0.5 - logp_old_k)); choose logp_old so ratios are 2 and 0.5.
        let old_a = vec![ln_half - 2f64.ln(), ln_half, ln_half, ln_half];
        let old_b = vec![ln_half + 2f64.ln(), ln_half, ln_half, ln_half];
        let g = RolloutGroup {
            observation: vec![0.0],
            responses: vec![
                Rollout { tokens: vec![0; 4], reward: 1.0, logp_old: old_a, logp_ref: vec![ln_half; 4] },
                Rollout { tokens: vec![0; 4], reward: 0.0, logp_old: old_b, logp_ref: vec![ln_half; 4] },
            ],
            reference: uniform,
        };
        let c = GrpoConfig { std_epsilon: 1e-15, ..cfg(0.0, Aggregation::SequenceLevel) };
        let v = grpo_objective(&g, &p, &c).unwrap();
        assert!((v - 1.5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn kl_penalty_example() {
        // Uniform policy against [0.25, 0.75] at every position; TokenMean keeps the per-position KL.
        let p = ToyPolicy::zeros(1, 2, 336);
        let reference = vec![vec![0.25, 0.75]; COORDS];
        let responses = (0..3)
            .map(|i| Rollout {
                tokens: vec![i % 2; 4],
                reward: 1.0,
                logp_old: vec![0.5f64.ln(); 4],
                logp_ref: vec![0.0; 4],
            })
            .collect();
        let g = RolloutGroup { observation: vec![0.3], responses, reference };
        let v = grpo_objective(&g, &p, &cfg(1.0, Aggregation::SequenceLevel)).unwrap();
        assert!((v + 0.14384).abs() < 1e-5, "{v}");
    }

    #[test]
    fn clipping_zeroes_gradient_outside_trust_region() {
        assert_eq!(surrogate(1.5, 1.0, Some(0.2)), (1.2, 0.0));
        assert_eq!(surrogate(1.1, 1.0, Some(0.2)), (1.1, 1.0));
        assert_eq!(surrogate(0.5, -1.0, Some(0.2)), (-0.8, 0.0));
        assert_eq!(surrogate(1.5, -1.0, Some(0.2)), (-1.5, -1.0));
    }
}
