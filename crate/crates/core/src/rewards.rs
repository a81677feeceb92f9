//! Rule-based rewards for box-answer responses.
//!
//! A response is scored by three components: format (does the text follow the
//! expected template), answer (a piecewise map of GIoU against the ground
//! truth) and length (think mode only). Format violations and length
//! violations override the combined reward with `-1.0`.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::RewardError;
use crate::geometry::{self, BBox};

/// Reward assigned whenever an override fires.
pub const OVERRIDE_REWARD: f64 = -1.0;

/// Expected response layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResponseMode {
    /// Bare `[x_min, y_min, x_max, y_max]`.
    #[default]
    #[serde(alias = "no-think", alias = "no_think")]
    NoThink,
    /// `<think>...</think><answer>[x_min, y_min, x_max, y_max]</answer>`.
    Think,
}

impl std::str::FromStr for ResponseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nothink" | "no-think" | "no_think" => Ok(ResponseMode::NoThink),
            "think" => Ok(ResponseMode::Think),
            other => Err(format!("unknown mode `{other}` (expected think or nothink)")),
        }
    }
}

impl std::fmt::Display for ResponseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResponseMode::NoThink => "nothink",
            ResponseMode::Think => "think",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub matched_format: bool,
    pub bbox: Option<BBox>,
    pub think_text: Option<String>,
    /// Response length `L` in tokens.
    pub token_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight of the answer reward.
    pub a: f64,
    /// Weight of the format reward.
    pub b: f64,
    /// Weight of the length reward (think mode only).
    pub c: f64,
    pub l_min: usize,
    pub l_cache: usize,
    pub l_max: usize,
    pub mode: ResponseMode,
    pub std_epsilon: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            l_min: 10,
            l_cache: 512,
            l_max: 1024,
            mode: ResponseMode::NoThink,
            std_epsilon: 1e-8,
        }
    }
}

impl RewardConfig {
    pub fn with_mode(mode: ResponseMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.l_min < self.l_cache && self.l_cache < self.l_max) {
            return Err(RewardError::InvalidConfig(format!(
                "length thresholds must satisfy l_min < l_cache < l_max, got {} / {} / {}",
                self.l_min, self.l_cache, self.l_max
            )));
        }
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(RewardError::InvalidConfig(format!(
                "coefficients a and b must be non-negative, got a={} b={}",
                self.a, self.b
            )));
        }
        if !self.c.is_finite() {
            return Err(RewardError::InvalidConfig("coefficient c must be finite".into()));
        }
        if !(self.std_epsilon > 0.0) {
            return Err(RewardError::InvalidConfig("std_epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Length weight actually applied: zero outside think mode.
    pub fn effective_c(&self) -> f64 {
        match self.mode {
            ResponseMode::Think => self.c,
            ResponseMode::NoThink => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardOverride {
    #[default]
    None,
    FormatViolation,
    TooShort,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: f64,
    pub r_answer: f64,
    pub r_length: f64,
    pub r_overall: f64,
    #[serde(rename = "override")]
    pub override_: RewardOverride,
    pub giou: Option<f64>,
}

const NUM: &str = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)";

static BOX_LIST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^\[\s*({NUM})\s*,\s*({NUM})\s*,\s*({NUM})\s*,\s*({NUM})\s*\]$"
    ))
    .unwrap()
});

static THINK_ANSWER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)^<think>(.*)</think>\s*<answer>(.*)</answer>$").unwrap()
});

const TAGS: [&str; 4] = ["<think>", "</think>", "<answer>", "</answer>"];

/// Whitespace-delimited token count, the default length measure.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

fn parse_box_list(s: &str) -> Option<BBox> {
    let caps = BOX_LIST.captures(s.trim())?;
    let mut c = [0.0; 4];
    for (i, slot) in c.iter_mut().enumerate() {
        *slot = caps[i + 1].parse::<f64>().ok()?;
    }
    BBox::from_array(c).ok()
}

pub fn parse_response(text: &str, mode: ResponseMode) -> ParsedResponse {
    parse_response_with_tokens(text, mode, whitespace_tokens(text))
}

/// Like [`parse_response`] with a caller-supplied token count (e.g. from a real tokenizer).
pub fn parse_response_with_tokens(
    text: &str,
    mode: ResponseMode,
    token_length: usize,
) -> ParsedResponse {
    let trimmed = text.trim();
    let (bbox, think_text) = match mode {
        ResponseMode::NoThink => (parse_box_list(trimmed), None),
        ResponseMode::Think => match THINK_ANSWER.captures(trimmed) {
            Some(caps) => {
                let think = &caps[1];
                let answer = &caps[2];
                if TAGS.iter().any(|t| think.contains(t) || answer.contains(t)) {
                    (None, None)
                } else {
                    match parse_box_list(answer) {
                        Some(b) => (Some(b), Some(think.to_string())),
                        None => (None, None),
                    }
                }
            }
            None => (None, None),
        },
    };
    ParsedResponse {
        matched_format: bbox.is_some(),
        bbox,
        think_text,
        token_length,
    }
}

/// Renders a box as integer `[x_min, y_min, x_max, y_max]`.
pub fn format_box(b: &BBox) -> String {
    let [x0, y0, x1, y1] = b.rounded();
    format!("[{x0}, {y0}, {x1}, {y1}]")
}

/// Renders a well-formed response for `b` in the given mode.
pub fn format_response(b: &BBox, mode: ResponseMode, think_text: &str) -> String {
    match mode {
        ResponseMode::NoThink => format_box(b),
        ResponseMode::Think => {
            format!("<think>{think_text}</think><answer>{}</answer>", format_box(b))
        }
    }
}

/// Piecewise answer reward over GIoU; each branch includes its upper edge.
pub fn answer_reward(g: f64) -> Result<f64, RewardError> {
    if !(-1.0..=1.0).contains(&g) {
        return Err(RewardError::GiouOutOfRange(g));
    }
    Ok(if g <= 0.0 {
        g
    } else if g <= 0.4 {
        0.0
    } else if g <= 0.75 {
        g
    } else if g <= 0.95 {
        g + 0.2
    } else {
        g + 0.5
    })
}

/// Length reward and the override it triggers, if any.
pub fn length_reward(length: usize, cfg: &RewardConfig) -> (f64, RewardOverride) {
    if length <= cfg.l_min {
        (0.0, RewardOverride::TooShort)
    } else if length <= cfg.l_cache {
        (0.0, RewardOverride::None)
    } else if length <= cfg.l_max {
        let num = cfg.l_cache as f64 - length as f64;
        let den = cfg.l_max as f64 - cfg.l_cache as f64;
        (num / den, RewardOverride::None)
    } else {
        (0.0, RewardOverride::Truncated)
    }
}

pub fn overall_reward(
    text: &str,
    gt: &BBox,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    score_parsed(&parse_response(text, cfg.mode), gt, cfg)
}

pub fn overall_reward_with_tokens(
    text: &str,
    gt: &BBox,
    cfg: &RewardConfig,
    token_length: usize,
) -> Result<RewardBreakdown, RewardError> {
    score_parsed(
        &parse_response_with_tokens(text, cfg.mode, token_length),
        gt,
        cfg,
    )
}

/// Scores an already parsed response against `gt`.
pub fn score_parsed(
    parsed: &ParsedResponse,
    gt: &BBox,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    if gt.is_degenerate() {
        return Err(RewardError::Geometry(crate::error::GeometryError::UndefinedOverlap));
    }
    let pred = match (parsed.matched_format, parsed.bbox) {
        (true, Some(b)) => b,
        _ => {
            return Ok(RewardBreakdown {
                r_format: 0.0,
                r_answer: 0.0,
                r_length: 0.0,
                r_overall: OVERRIDE_REWARD,
                override_: RewardOverride::FormatViolation,
                giou: None,
            })
        }
    };
    let g = geometry::giou(&pred, gt)?.clamp(-1.0, 1.0);
    let r_answer = answer_reward(g)?;
    let r_format = 1.0;
    let (r_length, override_) = match cfg.mode {
        ResponseMode::Think => length_reward(parsed.token_length, cfg),
        ResponseMode::NoThink => (0.0, RewardOverride::None),
    };
    let r_overall = if override_ == RewardOverride::None {
        cfg.a * r_answer + cfg.b * r_format + cfg.effective_c() * r_length
    } else {
        OVERRIDE_REWARD
    };
    Ok(RewardBreakdown {
        r_format,
        r_answer,
        r_length,
        r_overall,
        override_,
        giou: Some(g),
    })
}
