use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::backend::{BackendRequest, PolicyBackend, QueryKind};
use crate::error::BackendError;
use crate::geometry::{to_crop_coords, BBox};
use crate::rewards::{format_box, format_response, ResponseMode};
use crate::rng::derive_rng;

const MALFORMED: &str = "I am not sure where the target went.";

/// Oracle backend that answers from known ground truth.
///
/// Answers are the frame's ground-truth box plus Gaussian noise (frame pixels),
/// expressed in search-crop pixels and rendered in `mode`. With probability
/// `format_error_rate` a tracking answer is replaced by malformed text.
/// Randomness is keyed by `(seed, frame_index)`, so answers do not depend on
/// call order.
#[derive(Debug, Clone)]
pub struct MockBackend {
    gt: Vec<BBox>,
    noise_px: f64,
    format_error_rate: f64,
    mode: ResponseMode,
    seed: u64,
}

impl MockBackend {
    pub fn new(
        gt: Vec<BBox>,
        noise_px: f64,
        format_error_rate: f64,
        mode: ResponseMode,
        seed: u64,
    ) -> Self {
        Self {
            gt,
            noise_px: noise_px.max(0.0),
            format_error_rate: format_error_rate.clamp(0.0, 1.0),
            mode,
            seed,
        }
    }

    /// Zero-noise, always well-formed oracle.
    pub fn perfect(gt: Vec<BBox>, mode: ResponseMode) -> Self {
        Self::new(gt, 0.0, 0.0, mode, 0)
    }

    fn noisy_gt<R: Rng>(&self, frame: usize, rng: &mut R) -> Result<BBox, BackendError> {
        let gt = self.gt.get(frame).ok_or_else(|| {
            BackendError::Malformed(format!(
                "mock backend has no ground truth for frame index {frame}"
            ))
        })?;
        if self.noise_px == 0.0 {
            return Ok(*gt);
        }
        let normal = Normal::new(0.0, self.noise_px).expect("finite noise");
        let c = gt.to_array().map(|v| v + normal.sample(rng));
        Ok(BBox {
            x_min: c[0].min(c[2]),
            y_min: c[1].min(c[3]),
            x_max: c[0].max(c[2]),
            y_max: c[1].max(c[3]),
        })
    }
}

impl PolicyBackend for MockBackend {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        let kind_key = match request.kind {
            QueryKind::Track => 0,
            QueryKind::Ground => 1,
        };
        let mut rng = derive_rng(self.seed, &[request.frame_index as u64, kind_key]);
        match request.kind {
            QueryKind::Ground => {
                let b = self.noisy_gt(request.frame_index, &mut rng)?;
                Ok(format!("```json\n[{{\"bbox_2d\": {}, \"label\": \"target\"}}]\n```", format_box(&b)))
            }
            QueryKind::Track => {
                let failed = rng.random::<f64>() < self.format_error_rate;
                let b = self.noisy_gt(request.frame_index, &mut rng)?;
                if failed {
                    return Ok(MALFORMED.to_string());
                }
                let t = request.search_transform.ok_or_else(|| {
                    BackendError::Malformed("mock backend needs the search transform".into())
                })?;
                Ok(format_response(
                    &to_crop_coords(&b, &t),
                    self.mode,
                    "The target matches the template's appearance.",
                ))
            }
        }
    }
}
