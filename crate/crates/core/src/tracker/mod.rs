//! One-shot tracking with a fixed template.
//!
//! The first frame's target is cropped once and cached. Every later frame is
//! cropped around the previous prediction, sent to the backend together with
//! the template and the relocation prompt, and the parsed answer is mapped back
//! to frame pixels. There is no template update and no re-detection.

mod backend;
mod grounding;
mod http;
mod mock;

use std::path::Path;
use std::time::Instant;

use image::RgbImage;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{DatasetError, TrackError};
use crate::geometry::{clamp_to, to_crop_coords, to_frame_coords, BBox, CropTransform};
use crate::prompt::{grounding_prompt, task_prompt, DEFAULT_THINK_INSTRUCTION};
use crate::rewards::{parse_response, ResponseMode};
use crate::sampler::{render_crop, template_transform, SUPPORTED_RESOLUTIONS};

pub use backend::{BackendRequest, PolicyBackend, QueryKind};
pub use grounding::parse_grounding;
pub use http::{chat_request_body, image_data_uri, parse_chat_response, HttpBackend, HttpConfig};
pub use mock::MockBackend;

/// What to do when a response cannot be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Keep the previous box.
    #[default]
    RepeatPrevious,
    /// Abort the sequence.
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub template_scale: f64,
    pub search_scale: f64,
    pub resolution: u32,
    pub mode: ResponseMode,
    pub think_instruction: String,
    pub fallback: Fallback,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            template_scale: 2.0,
            search_scale: 4.0,
            resolution: 336,
            mode: ResponseMode::NoThink,
            think_instruction: DEFAULT_THINK_INSTRUCTION.to_string(),
            fallback: Fallback::RepeatPrevious,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if !(self.template_scale > 1.0 && self.search_scale > 1.0) {
            return Err(TrackError::InvalidConfig(format!(
                "scales must be > 1, got template {} search {}",
                self.template_scale, self.search_scale
            )));
        }
        if !SUPPORTED_RESOLUTIONS.contains(&self.resolution) {
            return Err(TrackError::InvalidConfig(format!(
                "resolution {} not in {SUPPORTED_RESOLUTIONS:?}",
                self.resolution
            )));
        }
        Ok(())
    }
}

/// Grounding query for `description` over the whole `frame`.
pub fn grounding_request<'a>(frame: &'a RgbImage, description: &str) -> BackendRequest<'a> {
    BackendRequest {
        kind: QueryKind::Ground,
        images: vec![frame],
        prompt: grounding_prompt(description.trim()),
        frame_index: 0,
        search_transform: None,
    }
}

/// Per-sequence tracking state. The template is fixed at initialization.
#[derive(Debug, Clone)]
pub struct TrackerState {
    template: RgbImage,
    template_transform: CropTransform,
    template_bbox: BBox,
    prompt: String,
    previous: BBox,
    frame_index: usize,
    frame_size: (u32, u32),
    latencies: Vec<f64>,
    failures: usize,
    last_search_transform: Option<CropTransform>,
}

impl TrackerState {
    /// Crops and caches the template around `target` in the first frame.
    pub fn init_with_box(frame: &RgbImage, target: BBox, cfg: &TrackerConfig) -> Result<Self, TrackError> {
        let started = Instant::now();
        cfg.validate()?;
        if target.is_degenerate() {
            return Err(TrackError::DegenerateInit(target.to_array()));
        }
        let transform = template_transform(&target, cfg.template_scale, cfg.resolution)?;
        let template = render_crop(frame, &transform);
        let side = cfg.resolution as f64;
        let template_bbox = clamp_to(&to_crop_coords(&target, &transform), side, side);
        let prompt = task_prompt(&template_bbox, cfg.mode, &cfg.think_instruction);
        Ok(Self {
            template,
            template_transform: transform,
            template_bbox,
            prompt,
            previous: target,
            frame_index: 0,
            frame_size: (frame.width(), frame.height()),
            latencies: vec![started.elapsed().as_secs_f64()],
            failures: 0,
            last_search_transform: None,
        })
    }

    /// Asks the backend to ground `description` in the full first frame, then
    /// initializes from the returned box.
    pub fn init_with_text<B: PolicyBackend + ?Sized>(
        frame: &RgbImage,
        description: &str,
        backend: &B,
        cfg: &TrackerConfig,
    ) -> Result<Self, TrackError> {
        let started = Instant::now();
        let description = description.trim();
        if description.is_empty() {
            return Err(TrackError::EmptyDescription);
        }
        let raw = backend
            .respond(&grounding_request(frame, description))
            .map_err(|source| TrackError::Backend { frame: 1, source })?;
        let target = parse_grounding(&raw)
            .map(|b| clamp_to(&b, frame.width() as f64, frame.height() as f64))
            .filter(|b| !b.is_degenerate())
            .ok_or(TrackError::GroundingFailed { raw })?;
        let mut state = Self::init_with_box(frame, target, cfg)?;
        state.latencies[0] = started.elapsed().as_secs_f64();
        Ok(state)
    }

    pub fn template(&self) -> &RgbImage {
        &self.template
    }

    pub fn template_transform(&self) -> &CropTransform {
        &self.template_transform
    }

    /// Template box in template-crop pixels.
    pub fn template_bbox(&self) -> &BBox {
        &self.template_bbox
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn previous(&self) -> &BBox {
        &self.previous
    }

    /// Zero-based index of the last processed frame.
    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Seconds spent per frame, initialization first.
    pub fn latencies(&self) -> &[f64] {
        &self.latencies
    }

    /// Frames whose response was unusable.
    pub fn failures(&self) -> usize {
        self.failures
    }

    /// First frame's (width, height).
    pub fn frame_size(&self) -> (u32, u32) {
        self.frame_size
    }

    pub fn last_search_transform(&self) -> Option<&CropTransform> {
        self.last_search_transform.as_ref()
    }

    /// Search window for the next frame: `search_scale * sqrt(area)` around the previous box.
    pub fn search_transform(&self, cfg: &TrackerConfig) -> Result<CropTransform, TrackError> {
        let side = cfg.search_scale * self.previous.geometric_size();
        Ok(CropTransform::centered(self.previous.center(), side, cfg.resolution)?)
    }

    /// Localizes the target in the next frame and returns the box in frame pixels.
    pub fn track_frame<B: PolicyBackend + ?Sized>(
        &mut self,
        frame: &RgbImage,
        backend: &B,
        cfg: &TrackerConfig,
    ) -> Result<BBox, TrackError> {
        let frame_index = self.frame_index + 1;
        let transform = self.search_transform(cfg)?;
        let search = render_crop(frame, &transform);
        let request = BackendRequest {
            kind: QueryKind::Track,
            images: vec![&self.template, &search],
            prompt: self.prompt.clone(),
            frame_index,
            search_transform: Some(transform),
        };
        let started = Instant::now();
        let response = backend.respond(&request).map_err(|source| TrackError::Backend {
            frame: frame_index + 1,
            source,
        })?;
        self.latencies.push(started.elapsed().as_secs_f64());
        self.frame_index = frame_index;
        self.last_search_transform = Some(transform);

        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        let predicted = parse_response(&response, cfg.mode)
            .bbox
            .map(|b| clamp_to(&to_frame_coords(&b, &transform), fw, fh))
            .filter(|b| !b.is_degenerate());
        match predicted {
            Some(b) => {
                self.previous = b;
            }
            None => {
                self.failures += 1;
                warn!("frame {}: unusable response {:?}", frame_index + 1, truncate(&response));
                if cfg.fallback == Fallback::Fail {
                    return Err(TrackError::Backend {
                        frame: frame_index + 1,
                        source: crate::error::BackendError::Malformed(response),
                    });
                }
            }
        }
        debug!("frame {}: {:?}", frame_index + 1, self.previous);
        Ok(self.previous)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(120).collect()
}

/// How the first frame's target is given.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Box(BBox),
    Text(String),
}

/// Output of [`run_sequence`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRun {
    pub boxes: Vec<BBox>,
    pub latencies: Vec<f64>,
    pub failures: usize,
}

fn load_frame(path: &Path) -> Result<RgbImage, TrackError> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|source| {
            TrackError::Dataset(DatasetError::Image {
                path: path.to_path_buf(),
                source,
            })
        })
}

/// Tracks through `frames`: frame 1 yields the initial box, later frames come
/// from [`TrackerState::track_frame`].
pub fn run_sequence<B: PolicyBackend + ?Sized, P: AsRef<Path>>(
    frames: &[P],
    init: &Init,
    backend: &B,
    cfg: &TrackerConfig,
) -> Result<SequenceRun, TrackError> {
    let first = frames.first().ok_or(TrackError::EmptySequence)?;
    let first = load_frame(first.as_ref())?;
    let mut state = match init {
        Init::Box(b) => TrackerState::init_with_box(&first, *b, cfg)?,
        Init::Text(t) => TrackerState::init_with_text(&first, t, backend, cfg)?,
    };
    let mut boxes = Vec::with_capacity(frames.len());
    boxes.push(*state.previous());
    for path in &frames[1..] {
        let frame = load_frame(path.as_ref())?;
        boxes.push(state.track_frame(&frame, backend, cfg)?);
    }
    Ok(SequenceRun {
        boxes,
        latencies: state.latencies().to_vec(),
        failures: state.failures(),
    })
}

/// Like [`run_sequence`] over in-memory frames.
pub fn run_frames<B: PolicyBackend + ?Sized>(
    frames: &[RgbImage],
    init: &Init,
    backend: &B,
    cfg: &TrackerConfig,
) -> Result<SequenceRun, TrackError> {
    let first = frames.first().ok_or(TrackError::EmptySequence)?;
    let mut state = match init {
        Init::Box(b) => TrackerState::init_with_box(first, *b, cfg)?,
        Init::Text(t) => TrackerState::init_with_text(first, t, backend, cfg)?,
    };
    let mut boxes = vec![*state.previous()];
    for frame in &frames[1..] {
        boxes.push(state.track_frame(frame, backend, cfg)?);
    }
    Ok(SequenceRun {
        boxes,
        latencies: state.latencies().to_vec(),
        failures: state.failures(),
    })
}
