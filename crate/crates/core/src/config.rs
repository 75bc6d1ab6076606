//! Layered run configuration: built-in defaults, then a `key = value` file
//! (TOML tables, one per subsystem), then command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{PIConfig, SensingParams, SurrogateTeleopConfig};
use crate::bottle::BottleParams;
use crate::imitation::TrainingConfig;
use crate::protocol::ProtocolConfig;

/// Environment variable that points at a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "SQUEEZE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid override `{0}`: expected section.key=value")]
    Override(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub bottle: BottleParams,
    pub sensing: SensingParams,
    pub pi: PIConfig,
    pub teleop: SurrogateTeleopConfig,
    pub protocol: ProtocolConfig,
    pub training: TrainingConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// Applies `section.key=value`; the value is parsed as a TOML literal.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.into()))?;
        let (section, field) = key.trim().split_once('.').ok_or_else(|| ConfigError::Override(assignment.into()))?;
        let parsed: toml::Value = format!("v = {}", value.trim())
            .parse::<toml::Table>()
            .map_err(|e| ConfigError::Parse(format!("{assignment}: {e}")))?
            .remove("v")
            .ok_or_else(|| ConfigError::Override(assignment.into()))?;
        let mut table = toml::Table::try_from(&*self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let sect = table
            .get_mut(section)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| ConfigError::Parse(format!("unknown section `{section}`")))?;
        if !sect.contains_key(field) {
            return Err(ConfigError::Parse(format!("unknown key `{section}.{field}`")));
        }
        // integers are accepted where floats are expected
        let parsed = match (sect.get(field), parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        sect.insert(field.to_string(), parsed);
        let updated: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    // negated comparisons so that NaN fails every check
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bottle.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let p = &self.protocol;
        if !(p.control_hz > 0.0) {
            return Err(ConfigError::Invalid("protocol.control_hz must be > 0".into()));
        }
        if !(p.s_max > 0.0) {
            return Err(ConfigError::Invalid("protocol.s_max must be > 0".into()));
        }
        if !(p.w_min < self.bottle.contact_width) {
            return Err(ConfigError::Invalid("protocol.w_min must be below bottle.contact_width".into()));
        }
        if !(p.w_min < p.w_loose && p.w_loose <= self.bottle.contact_width) {
            return Err(ConfigError::Invalid("need protocol.w_min < protocol.w_loose <= bottle.contact_width".into()));
        }
        if !(p.scale_hz > 0.0) {
            return Err(ConfigError::Invalid("protocol.scale_hz must be > 0".into()));
        }
        if !(self.pi.alpha > 0.0 && self.pi.alpha <= 1.0) {
            return Err(ConfigError::Invalid("pi.alpha must lie in (0, 1]".into()));
        }
        if (self.pi.ts * p.control_hz - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid("pi.ts must equal 1 / protocol.control_hz".into()));
        }
        let t = &self.teleop;
        if t.reaction_delay < 0.0 || t.tremor_std < 0.0 || t.flow_obs_noise_std < 0.0 || t.deadband < 0.0 {
            return Err(ConfigError::Invalid("teleop delays, deadband and noise levels must be >= 0".into()));
        }
        let s = &self.sensing;
        if s.grip_noise_std < 0.0 || s.visual_noise_std < 0.0 || s.visual_lag < 0.0 {
            return Err(ConfigError::Invalid("sensing noise levels and lag must be >= 0".into()));
        }
        if self.training.batch_size == 0 || self.training.epochs == 0 {
            return Err(ConfigError::Invalid("training.batch_size and training.epochs must be > 0".into()));
        }
        Ok(())
    }

    /// Short digest of the canonical JSON encoding of the configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// Maximum executed action per control step, mm.
    pub fn max_step(&self) -> f64 {
        self.bottle.max_gripper_speed / self.protocol.control_hz
    }
}
