use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::GrpoError;

/// One categorical per box coordinate: x_min, y_min, x_max, y_max.
pub const COORDS: usize = 4;

/// Linear-softmax policy over binned box coordinates.
///
/// Each coordinate `k` has logits `z_k = W_k [obs, 1]`, where `W_k` is a
/// `bins x (obs_dim + 1)` block. Bin `j` decodes to the bin center
/// `(j + 0.5) * output_size / bins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    obs_dim: usize,
    bins: usize,
    output_size: u32,
    /// Row-major `[coord][bin][feature]`.
    weights: Vec<f64>,
}

impl ToyPolicy {
    pub fn zeros(obs_dim: usize, bins: usize, output_size: u32) -> Self {
        Self {
            obs_dim,
            bins,
            output_size,
            weights: vec![0.0; COORDS * bins * (obs_dim + 1)],
        }
    }

    /// Weights drawn i.i.d. from `N(0, scale^2)`.
    pub fn random<R: Rng + ?Sized>(
        obs_dim: usize,
        bins: usize,
        output_size: u32,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(obs_dim, bins, output_size);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        for w in &mut p.weights {
            *w = normal.sample(rng);
        }
        p
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn output_size(&self) -> u32 {
        self.output_size
    }

    pub fn num_features(&self) -> usize {
        self.obs_dim + 1
    }

    pub fn params(&self) -> &[f64] {
        &self.weights
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), GrpoError> {
        if params.len() != self.weights.len() {
            return Err(GrpoError::Shape(format!(
                "expected {} parameters, got {}",
                self.weights.len(),
                params.len()
            )));
        }
        self.weights.copy_from_slice(params);
        Ok(())
    }

    pub(crate) fn index(&self, coord: usize, bin: usize, feature: usize) -> usize {
        (coord * self.bins + bin) * self.num_features() + feature
    }

    /// `[obs, 1]`.
    pub fn features(&self, obs: &[f64]) -> Result<Vec<f64>, GrpoError> {
        if obs.len() != self.obs_dim {
            return Err(GrpoError::Shape(format!(
                "observation has {} values, policy expects {}",
                obs.len(),
                self.obs_dim
            )));
        }
        let mut x = obs.to_vec();
        x.push(1.0);
        Ok(x)
    }

    /// Softmax distribution of every coordinate given the feature vector.
    pub fn distributions_from_features(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..COORDS)
            .map(|k| {
                let logits: Vec<f64> = (0..self.bins)
                    .map(|j| {
                        let row = &self.weights[self.index(k, j, 0)..self.index(k, j + 1, 0)];
                        row.iter().zip(x).map(|(w, f)| w * f).sum()
                    })
                    .collect();
                softmax(&logits)
            })
            .collect()
    }

    pub fn distributions(&self, obs: &[f64]) -> Result<Vec<Vec<f64>>, GrpoError> {
        Ok(self.distributions_from_features(&self.features(obs)?))
    }

    /// Per-token log-probabilities of `tokens` (one bin per coordinate).
    pub fn token_log_probs(&self, obs: &[f64], tokens: &[usize]) -> Result<Vec<f64>, GrpoError> {
        let dists = self.distributions(obs)?;
        check_tokens(tokens, self.bins)?;
        Ok(tokens
            .iter()
            .zip(&dists)
            .map(|(&t, d)| d[t].ln())
            .collect())
    }

    /// Samples one bin per coordinate.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        rng: &mut R,
    ) -> Result<Vec<usize>, GrpoError> {
        let dists = self.distributions(obs)?;
        Ok(dists.iter().map(|d| sample_categorical(d, rng)).collect())
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.output_size as f64 / self.bins as f64
    }

    /// Renders sampled bins as a no-think response `[x_min, y_min, x_max, y_max]`.
    ///
    /// Out-of-order coordinates are rendered as sampled, so they fail the format check.
    pub fn render(&self, tokens: &[usize]) -> String {
        let c: Vec<i64> = tokens
            .iter()
            .map(|&t| self.bin_center(t).round() as i64)
            .collect();
        format!("[{}, {}, {}, {}]", c[0], c[1], c[2], c[3])
    }
}

pub(crate) fn check_tokens(tokens: &[usize], bins: usize) -> Result<(), GrpoError> {
    if tokens.len() != COORDS {
        return Err(GrpoError::Shape(format!(
            "response has {} tokens, expected {COORDS}",
            tokens.len()
        )));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t >= bins) {
        return Err(GrpoError::Shape(format!("token {t} out of range for {bins} bins")));
    }
    Ok(())
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}
