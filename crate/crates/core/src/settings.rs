//! The JSON settings file shared by the command-line tools.
//!
//! ```json
//! {
//!   "detection": { "ack_window_s": 60 },
//!   "contacts": [{ "id": "A", "number": "+100" }],
//!   "gateway": { "default": "fail" },
//!   "tick_period_s": 1
//! }
//! ```
//!
//! Every section is optional. Unknown top-level sections are ignored so the
//! service can keep its own options in the same file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, DetectionConfig};
use crate::escalation::ContactList;
use crate::gateway::GatewayScript;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub detection: DetectionConfig,
    pub contacts: ContactList,
    /// Gateway behaviour assumed by offline replays.
    pub gateway: GatewayScript,
    pub tick_period_s: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            detection: DetectionConfig::default(),
            contacts: ContactList::default(),
            gateway: GatewayScript::default(),
            tick_period_s: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error("cannot read settings: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed settings: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("tick_period_s must be > 0")]
    TickPeriod,
}

impl Settings {
    pub fn from_json(text: &str) -> Result<Self, SettingsError> {
        let settings: Settings = serde_json::from_str(text)?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SettingsError> {
        self.detection.validate()?;
        if self.tick_period_s == 0 {
            return Err(SettingsError::TickPeriod);
        }
        Ok(())
    }
}
