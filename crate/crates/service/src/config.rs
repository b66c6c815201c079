use std::path::PathBuf;
use std::time::Duration;

use comaguard_core::settings::{Settings, SettingsError};
use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, ENV_GATEWAY_URL};

/// The `service` section of the settings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceOptions {
    pub port: u16,
    /// Base URL of the notification gateway. Without one, attempts are
    /// answered from the settings file's `gateway` script.
    pub gateway_url: Option<String>,
    /// How long to wait for a gateway answer before leaving the attempt to
    /// its logical timeout.
    pub gateway_timeout_ms: u64,
    /// Where sessions are persisted. `None` keeps them in memory.
    pub data_dir: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            port: 8080,
            gateway_url: None,
            gateway_timeout_ms: 5_000,
            data_dir: Some(PathBuf::from("comaguard-data")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServiceConfig {
    /// Defaults for new sessions and the offline gateway script.
    pub settings: Settings,
    pub options: ServiceOptions,
}

#[derive(Deserialize)]
struct FileWithService {
    #[serde(default)]
    service: ServiceOptions,
}

impl ServiceConfig {
    /// Reads both the shared settings and the `service` section.
    pub fn from_json(text: &str) -> Result<Self, SettingsError> {
        let settings = Settings::from_json(text)?;
        let FileWithService { service } = serde_json::from_str(text)?;
        Ok(Self {
            settings,
            options: service,
        })
    }

    /// Fills `gateway_url` from the environment when the file has none.
    pub fn with_env(mut self) -> Self {
        if self.options.gateway_url.is_none() {
            self.options.gateway_url = std::env::var(ENV_GATEWAY_URL).ok().filter(|u| !u.is_empty());
        }
        self
    }

    pub fn gateway(&self) -> Gateway {
        match &self.options.gateway_url {
            Some(url) => Gateway::http(url, Duration::from_millis(self.options.gateway_timeout_ms)),
            None => Gateway::Scripted(self.settings.gateway.clone()),
        }
    }
}
