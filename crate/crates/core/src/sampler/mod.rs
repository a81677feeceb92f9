//! Template/search pair sampling from GOT-10k style sequences.
//!
//! A training record pairs a template crop (target at a fixed context scale,
//! centered) with a search crop from another frame of the same sequence whose
//! side is a random multiple of the target's geometric size and whose center is
//! randomly shifted. The supervision target is the search-frame box in
//! search-crop pixels.

mod crop;
mod dataset;
mod got10k;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::geometry::{clamp_to, to_crop_coords, BBox, CropTransform};
use crate::prompt::{task_prompt, DEFAULT_THINK_INSTRUCTION};
use crate::rewards::{format_response, ResponseMode};

pub use crop::{crop_and_resize, mean_color, render_crop};
pub use dataset::{generate_dataset, read_records, DatasetOptions, Manifest};
pub use got10k::{load_got10k, load_got10k_for_tracking, parse_xywh_line, SequenceAnnotation};

/// Input resolutions a record may be rendered at.
pub const SUPPORTED_RESOLUTIONS: [u32; 4] = [112, 224, 336, 448];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub shift_min: f64,
    /// Largest center shift as a fraction of the search crop side.
    pub shift_max: f64,
    pub resolutions: Vec<u32>,
    /// Largest frame interval; capped at sequence length - 1.
    pub max_interval: Option<usize>,
    pub template_scale: f64,
    pub mode: ResponseMode,
    pub think_instruction: String,
    pub seed: u64,
    /// Resampling attempts when the target falls out of the crop.
    pub max_retries: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            scale_min: 2.0,
            scale_max: 8.0,
            shift_min: 0.0,
            shift_max: 0.2,
            resolutions: SUPPORTED_RESOLUTIONS.to_vec(),
            max_interval: None,
            template_scale: 2.0,
            mode: ResponseMode::NoThink,
            think_instruction: DEFAULT_THINK_INSTRUCTION.to_string(),
            seed: 0,
            max_retries: 10,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidConfig(m));
        if !(self.scale_min > 1.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return bad(format!(
                "scale range must satisfy 1 < min <= max, got [{}, {}]",
                self.scale_min, self.scale_max
            ));
        }
        if !(self.shift_min >= 0.0 && self.shift_min <= self.shift_max && self.shift_max < 1.0) {
            return bad(format!(
                "shift range must satisfy 0 <= min <= max < 1, got [{}, {}]",
                self.shift_min, self.shift_max
            ));
        }
        if self.resolutions.is_empty() {
            return bad("resolutions must be nonempty".into());
        }
        if let Some(r) = self.resolutions.iter().find(|r| !SUPPORTED_RESOLUTIONS.contains(r)) {
            return bad(format!("unsupported resolution {r}"));
        }
        if !(self.template_scale > 1.0) {
            return bad(format!("template_scale must be > 1, got {}", self.template_scale));
        }
        if self.max_interval == Some(0) {
            return bad("max_interval must be >= 1".into());
        }
        Ok(())
    }
}

/// Random choices that define one training pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub template_frame: usize,
    pub search_frame: usize,
    pub scale: f64,
    /// Center shift `(dx, dy)` as signed fractions of the search crop side.
    pub shift: (f64, f64),
    pub resolution: u32,
}

fn signed_shift<R: Rng + ?Sized>(cfg: &SampleConfig, rng: &mut R) -> f64 {
    let magnitude = if cfg.shift_max > cfg.shift_min {
        rng.random_range(cfg.shift_min..=cfg.shift_max)
    } else {
        cfg.shift_min
    };
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

const INTERVAL_ATTEMPTS: usize = 64;

/// Draws template/search frames, search scale, shift and resolution.
pub fn sample_pair<R: Rng + ?Sized>(
    seq: &SequenceAnnotation,
    cfg: &SampleConfig,
    rng: &mut R,
) -> Result<PairSample, DatasetError> {
    let usable = seq.usable_frames();
    if usable.len() < 2 {
        return Err(DatasetError::NotEnoughFrames {
            seq: seq.name.clone(),
            usable: usable.len(),
        });
    }
    let n = seq.boxes.len();
    let max_interval = cfg.max_interval.unwrap_or(n - 1).min(n - 1).max(1);
    let mut is_usable = vec![false; n];
    for &i in &usable {
        is_usable[i] = true;
    }

    let mut pair = None;
    for _ in 0..INTERVAL_ATTEMPTS {
        let d = rng.random_range(1..=max_interval);
        let starts: Vec<usize> = (0..n - d)
            .filter(|&i| is_usable[i] && is_usable[i + d])
            .collect();
        if starts.is_empty() {
            continue;
        }
        let i = starts[rng.random_range(0..starts.len())];
        pair = Some(if rng.random_bool(0.5) { (i, i + d) } else { (i + d, i) });
        break;
    }
    // sparse visibility: fall back to any two distinct usable frames
    let (template_frame, search_frame) = pair.unwrap_or_else(|| {
        let a = rng.random_range(0..usable.len());
        let mut b = rng.random_range(0..usable.len() - 1);
        if b >= a {
            b += 1;
        }
        (usable[a], usable[b])
    });

    let scale = if cfg.scale_max > cfg.scale_min {
        rng.random_range(cfg.scale_min..=cfg.scale_max)
    } else {
        cfg.scale_min
    };
    let shift = (signed_shift(cfg, rng), signed_shift(cfg, rng));
    let resolution = cfg.resolutions[rng.random_range(0..cfg.resolutions.len())];
    Ok(PairSample {
        template_frame,
        search_frame,
        scale,
        shift,
        resolution,
    })
}

/// Crop geometry of one pair, independent of pixel data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub template_transform: CropTransform,
    pub search_transform: CropTransform,
    /// Template box in template-crop pixels, clamped to the crop.
    pub template_bbox: BBox,
    /// Search-frame box in search-crop pixels, clamped to the crop.
    pub gt_bbox: BBox,
}

/// Template crop: `template_scale * sqrt(w h)` around the target, no shift.
pub fn template_transform(
    target: &BBox,
    template_scale: f64,
    resolution: u32,
) -> Result<CropTransform, DatasetError> {
    Ok(CropTransform::centered(
        target.center(),
        template_scale * target.geometric_size(),
        resolution,
    )?)
}

pub fn pair_geometry(
    seq: &SequenceAnnotation,
    pair: &PairSample,
    cfg: &SampleConfig,
) -> Result<PairGeometry, DatasetError> {
    let res = pair.resolution;
    let side_px = res as f64;

    let template_box = &seq.boxes[pair.template_frame];
    let template_transform = template_transform(template_box, cfg.template_scale, res)?;
    let template_bbox = clamp_to(&to_crop_coords(template_box, &template_transform), side_px, side_px);

    let search_box = &seq.boxes[pair.search_frame];
    let side = pair.scale * search_box.geometric_size();
    let (cx, cy) = search_box.center();
    let search_transform =
        CropTransform::centered((cx + pair.shift.0 * side, cy + pair.shift.1 * side), side, res)?;
    let gt_bbox = clamp_to(&to_crop_coords(search_box, &search_transform), side_px, side_px);
    if gt_bbox.is_degenerate() || template_bbox.is_degenerate() {
        return Err(DatasetError::DegenerateTarget);
    }
    Ok(PairGeometry {
        template_transform,
        search_transform,
        template_bbox,
        gt_bbox,
    })
}

/// One template/search training pair, serialized as a line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub template_image: String,
    pub search_image: String,
    pub prompt: String,
    pub gt_bbox: [f64; 4],
    pub template_bbox: [f64; 4],
    pub resolution: u32,
    pub mode: ResponseMode,
    pub seq: String,
    pub frame_t: usize,
    pub frame_s: usize,
    pub template_transform: CropTransform,
    pub search_transform: CropTransform,
}

impl TrainingRecord {
    pub fn gt(&self) -> BBox {
        BBox::from_array(self.gt_bbox).expect("record boxes are ordered")
    }

    /// Assistant answer for supervised export. Think-mode answers carry an
    /// empty reasoning block to be filled externally.
    pub fn answer(&self) -> String {
        format_response(&self.gt(), self.mode, "")
    }

    /// Two-image chat exchange whose assistant turn is the formatted answer.
    pub fn to_sft(&self) -> serde_json::Value {
        serde_json::json!({
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "image", "image": self.template_image},
                        {"type": "image", "image": self.search_image},
                        {"type": "text", "text": self.prompt},
                    ]
                },
                {"role": "assistant", "content": self.answer()}
            ]
        })
    }
}

/// Assembles a record from pair geometry; image references are supplied by the caller.
pub fn build_record(
    seq: &SequenceAnnotation,
    pair: &PairSample,
    cfg: &SampleConfig,
    template_image: String,
    search_image: String,
) -> Result<TrainingRecord, DatasetError> {
    let geo = pair_geometry(seq, pair, cfg)?;
    Ok(TrainingRecord {
        template_image,
        search_image,
        prompt: task_prompt(&geo.template_bbox, cfg.mode, &cfg.think_instruction),
        gt_bbox: geo.gt_bbox.to_array(),
        template_bbox: geo.template_bbox.to_array(),
        resolution: pair.resolution,
        mode: cfg.mode,
        seq: seq.name.clone(),
        frame_t: pair.template_frame,
        frame_s: pair.search_frame,
        template_transform: geo.template_transform,
        search_transform: geo.search_transform,
    })
}
