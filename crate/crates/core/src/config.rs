//! Shared TOML configuration.
//!
//! ```toml
//! [reward]
//! a = 1.0
//! mode = "think"
//!
//! [grpo]
//! beta = 0.04
//! aggregation = "token_level"
//!
//! [backend]
//! endpoint = "http://localhost:8000/v1"
//! ```
//!
//! Values are layered: built-in defaults, then `TRACKER_ENDPOINT`,
//! `TRACKER_MODEL` and `TRACKER_API_KEY`, then the file, then explicit
//! `section.key=value` overrides.

use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::ConfigError;
use crate::grpo::GrpoConfig;
use crate::rewards::RewardConfig;
use crate::sampler::SampleConfig;
use crate::tracker::{HttpConfig, TrackerConfig};

pub const SECTIONS: [&str; 7] = ["reward", "grpo", "sample", "tracker", "backend", "mock", "eval"];

/// Settings for the ground-truth oracle backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub noise_px: f64,
    pub format_error_rate: f64,
    pub seed: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            noise_px: 0.0,
            format_error_rate: 0.0,
            seed: 0,
        }
    }
}

/// Scoring follows the benchmark protocol and has no tunables; the section is
/// accepted so that config files can carry it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AppConfig {
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub sample: SampleConfig,
    pub tracker: TrackerConfig,
    pub backend: HttpConfig,
    pub mock: MockConfig,
    pub eval: EvalConfig,
}

static UNKNOWN_FIELD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"unknown field `([^`]*)`").expect("valid regex"));

fn section<T: DeserializeOwned + Default>(table: &Table, name: &str) -> Result<T, ConfigError> {
    let Some(v) = table.get(name) else {
        return Ok(T::default());
    };
    v.clone().try_into().map_err(|e: toml::de::Error| {
        let msg = e.to_string();
        match UNKNOWN_FIELD.captures(&msg) {
            Some(c) => ConfigError::UnknownKey(format!("{name}.{}", &c[1])),
            None => ConfigError::InvalidValue {
                key: name.to_string(),
                message: msg.trim().to_string(),
            },
        }
    })
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let (sec, field) = key
        .split_once('.')
        .filter(|(s, f)| !s.is_empty() && !f.is_empty() && !f.contains('.'))
        .ok_or_else(|| ConfigError::InvalidValue {
            key: key.to_string(),
            message: "expected `section.key`".into(),
        })?;
    if !SECTIONS.contains(&sec) {
        return Err(ConfigError::UnknownKey(key.to_string()));
    }
    let entry = table
        .entry(sec.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(field.to_string(), value);
            Ok(())
        }
        _ => Err(ConfigError::InvalidValue {
            key: sec.to_string(),
            message: "expected a table".into(),
        }),
    }
}

/// Parses a `key=value` override; the value is read as TOML, falling back to
/// a bare string.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::InvalidValue {
        key: s.to_string(),
        message: "expected `section.key=value`".into(),
    })?;
    let v = v.trim();
    let value = format!("v = {v}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl AppConfig {
    /// Builds a config from layered tables; later layers win key by key.
    pub fn from_layers(layers: impl IntoIterator<Item = Table>) -> Result<Self, ConfigError> {
        let mut table = Table::new();
        for layer in layers {
            merge(&mut table, layer);
        }
        if let Some(k) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let cfg = Self {
            reward: section(&table, "reward")?,
            grpo: section(&table, "grpo")?,
            sample: section(&table, "sample")?,
            tracker: section(&table, "tracker")?,
            backend: section(&table, "backend")?,
            mock: section(&table, "mock")?,
            eval: section(&table, "eval")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses TOML text on top of the defaults.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_layers([parse_table(text)?])
    }

    /// Full layering: env, optional file, then `section.key=value` overrides.
    pub fn load(
        file: Option<&Path>,
        overrides: &[String],
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut env_layer = Table::new();
        for (var, key) in [
            ("TRACKER_ENDPOINT", "backend.endpoint"),
            ("TRACKER_MODEL", "backend.model"),
            ("TRACKER_API_KEY", "backend.api_key"),
        ] {
            if let Some(v) = env(var).filter(|v| !v.is_empty()) {
                set_path(&mut env_layer, key, Value::String(v))?;
            }
        }
        let file_layer = match file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                parse_table(&text)?
            }
            None => Table::new(),
        };
        let mut flag_layer = Table::new();
        for o in overrides {
            let (k, v) = parse_override(o)?;
            set_path(&mut flag_layer, &k, v)?;
        }
        Self::from_layers([env_layer, file_layer, flag_layer])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, e: &dyn std::fmt::Display| ConfigError::InvalidValue {
            key: key.to_string(),
            message: e.to_string(),
        };
        self.reward.validate().map_err(|e| invalid("reward", &e))?;
        self.grpo.validate().map_err(|e| invalid("grpo", &e))?;
        self.sample.validate().map_err(|e| invalid("sample", &e))?;
        self.tracker.validate().map_err(|e| invalid("tracker", &e))?;
        if !(0.0..=1.0).contains(&self.mock.format_error_rate) {
            return Err(invalid("mock.format_error_rate", &"must be in [0, 1]"));
        }
        if !(self.mock.noise_px >= 0.0) {
            return Err(invalid("mock.noise_px", &"must be >= 0"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>()
        .map_err(|e| ConfigError::Parse(e.to_string().trim().to_string()))
}
