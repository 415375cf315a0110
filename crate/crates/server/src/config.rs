use std::path::{Path, PathBuf};

use rigserve_core::blend::SmoothingConfig;
use rigserve_core::lipsync::RampConfig;
use rigserve_core::session::{BlinkConfig, SessionConfig};
use rigserve_core::RigDefinition;
use serde::{Deserialize, Serialize};

/// Environment variable naming the config file.
pub const CONFIG_ENV: &str = "RIGSERVE_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot load rig {path}: {message}")]
    Rig { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlinkSettings {
    pub enabled: bool,
    pub seed: u64,
    pub min_interval_s: f64,
    pub max_interval_s: f64,
    pub duration_ms: f64,
}

impl Default for BlinkSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            seed: 0,
            min_interval_s: 2.0,
            max_interval_s: 6.0,
            duration_ms: 200.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub tick_hz: f64,
    /// TCP control endpoint.
    pub listen: String,
    /// HTTP endpoint serving the WebSocket at `/ws`.
    pub ws_listen: String,
    pub smoothing_alpha: f64,
    pub ramp_ms: f64,
    pub blink: BlinkSettings,
    /// Rig definition file; the built-in default rig when absent.
    pub rig_path: Option<PathBuf>,
    pub max_clients: usize,
    /// Frames a subscriber may fall behind before it is disconnected.
    pub subscriber_backlog: usize,
    /// Commands waiting for the session before new ones get `queue_full`.
    pub command_queue: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            tick_hz: 60.0,
            listen: "127.0.0.1:4618".into(),
            ws_listen: "127.0.0.1:4619".into(),
            smoothing_alpha: SessionConfig::DEFAULT_ALPHA,
            ramp_ms: RampConfig::DEFAULT_MS,
            blink: BlinkSettings::default(),
            rig_path: None,
            max_clients: 32,
            subscriber_backlog: 120,
            command_queue: 4096,
        }
    }
}

impl ServerConfig {
    pub fn from_json(doc: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(doc).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let doc = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&doc, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tick_hz > 0.0 && self.tick_hz <= 1000.0) {
            return Err(ConfigError::Invalid(format!(
                "tick_hz must be in (0, 1000], got {}",
                self.tick_hz
            )));
        }
        if self.max_clients == 0 {
            return Err(ConfigError::Invalid(
                "max_clients must be at least 1".into(),
            ));
        }
        if self.subscriber_backlog == 0 || self.command_queue == 0 {
            return Err(ConfigError::Invalid(
                "subscriber_backlog and command_queue must be at least 1".into(),
            ));
        }
        self.session_config().map(|_| ())
    }

    pub fn session_config(&self) -> Result<SessionConfig, ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let smoothing = SmoothingConfig::new(self.smoothing_alpha).map_err(|e| invalid(&e))?;
        let ramp = RampConfig::new(self.ramp_ms).map_err(|e| invalid(&e))?;
        let b = &self.blink;
        let blink = b.enabled.then_some(BlinkConfig {
            seed: b.seed,
            interval_s: (b.min_interval_s, b.max_interval_s),
            duration_ms: b.duration_ms,
        });
        if let Some(bc) = blink {
            rigserve_core::blend::BlinkSchedule::new(bc.seed, bc.interval_s, bc.duration_ms, 0.0)
                .map_err(|e| invalid(&e))?;
        }
        Ok(SessionConfig {
            smoothing,
            ramp,
            blink,
            ..SessionConfig::default()
        })
    }

    pub fn load_rig(&self) -> Result<RigDefinition, ConfigError> {
        let Some(path) = &self.rig_path else {
            return Ok(RigDefinition::default_rig());
        };
        let rig_err = |message: String| ConfigError::Rig {
            path: path.clone(),
            message,
        };
        let doc = std::fs::read_to_string(path).map_err(|e| rig_err(e.to_string()))?;
        RigDefinition::from_json(&doc).map_err(|e| rig_err(e.to_string()))
    }

    pub fn tick_period(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(1.0 / self.tick_hz)
    }
}
