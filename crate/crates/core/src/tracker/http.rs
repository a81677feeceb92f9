//! OpenAI-compatible chat-completions backend (vLLM and similar servers).

use std::io::Cursor;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::{ImageFormat, RgbImage};
use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ureq::Agent;

use super::backend::{BackendRequest, PolicyBackend};
use crate::error::BackendError;

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL such as `http://localhost:8000/v1`, or the full
    /// `.../chat/completions` URL.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Number of choices per request; only the first feeds the tracker.
    pub n: u32,
    pub timeout_secs: f64,
    /// Extra attempts after a failed one.
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key: None,
            temperature: 0.0,
            max_tokens: 1024,
            n: 1,
            timeout_secs: 60.0,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

impl HttpConfig {
    pub fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Encodes an image as a PNG data URI.
pub fn image_data_uri(img: &RgbImage) -> Result<String, BackendError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| BackendError::Encode(e.to_string()))?;
    Ok(format!("data:image/png;base64,{}", STANDARD.encode(buf.into_inner())))
}

/// Builds the request body: one user message with every image part in order,
/// followed by the prompt text.
pub fn chat_request_body(
    cfg: &HttpConfig,
    images: &[&RgbImage],
    prompt: &str,
) -> Result<Value, BackendError> {
    let mut content = Vec::with_capacity(images.len() + 1);
    for img in images {
        content.push(json!({
            "type": "image_url",
            "image_url": {"url": image_data_uri(img)?}
        }));
    }
    content.push(json!({"type": "text", "text": prompt}));
    Ok(json!({
        "model": cfg.model,
        "messages": [{"role": "user", "content": content}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "n": cfg.n,
    }))
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

/// Extracts every choice's text content.
pub fn parse_chat_response(body: &str) -> Result<Vec<String>, BackendError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| BackendError::Malformed(format!("{e}: {}", excerpt(body))))?;
    let choices = v
        .get("choices")
        .and_then(Value::as_array)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| BackendError::Malformed(format!("no choices: {}", excerpt(body))))?;
    choices
        .iter()
        .map(|c| {
            let content = &c["message"]["content"];
            match content {
                Value::String(s) => Ok(s.clone()),
                // some servers return content parts
                Value::Array(parts) => Ok(parts
                    .iter()
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect::<Vec<_>>()
                    .join("")),
                _ => Err(BackendError::Malformed(format!(
                    "choice without text content: {}",
                    excerpt(body)
                ))),
            }
        })
        .collect()
}

pub struct HttpBackend {
    cfg: HttpConfig,
    agent: Agent,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn post_once(&self, body: &str) -> Result<String, BackendError> {
        let mut req = self
            .agent
            .post(&self.cfg.url())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status {
                status,
                body: excerpt(&text),
            });
        }
        Ok(text)
    }

    /// Sends a chat completion and returns the text of every choice.
    ///
    /// Transport failures, 429 and 5xx responses are retried with exponential backoff.
    pub fn complete(&self, images: &[&RgbImage], prompt: &str) -> Result<Vec<String>, BackendError> {
        let body = chat_request_body(&self.cfg, images, prompt)?.to_string();
        let mut attempt = 0;
        loop {
            let err = match self.post_once(&body) {
                Ok(text) => return parse_chat_response(&text),
                Err(e) => e,
            };
            let retryable = match &err {
                BackendError::Transport(_) => true,
                BackendError::Status { status, .. } => *status == 429 || *status >= 500,
                _ => false,
            };
            if !retryable || attempt >= self.cfg.retries {
                return Err(err);
            }
            let delay = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
            warn!("backend attempt {} failed ({err}), retrying in {delay} ms", attempt + 1);
            thread::sleep(Duration::from_millis(delay));
            attempt += 1;
        }
    }
}

impl PolicyBackend for HttpBackend {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        let mut choices = self.complete(&request.images, &request.prompt)?;
        Ok(choices.swap_remove(0))
    }
}
