use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use curate_core::embedding::{EmbeddingProvider, HashingEmbedder, RemoteEmbedder};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{var}: {message}")]
    Env { var: &'static str, message: String },
}

/// Server settings. Every field has a default; a TOML file may set any of
/// them and `TELE_PORT`, `TELE_DATA_DIR` and `TELE_PROVIDER_URL` override
/// the file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub data_dir: PathBuf,
    /// Remote embedding endpoint. Without one the hashing embedder is used.
    pub provider_url: Option<String>,
    /// Vector length the remote endpoint returns.
    pub provider_dim: usize,
    /// Seed for workspaces created without one.
    pub default_seed: u64,
    /// Open event-stream connections allowed at once.
    pub max_streams: usize,
    /// HTTP requests served at once.
    pub max_requests: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            host: "127.0.0.1".into(),
            port: 7878,
            data_dir: PathBuf::from("data"),
            provider_url: None,
            provider_dim: 1024,
            default_seed: 0,
            max_streams: 256,
            max_requests: 512,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Reads `path` when given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_owned(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(p) = get("TELE_PORT") {
            self.port = p.trim().parse().map_err(|e: std::num::ParseIntError| ConfigError::Env {
                var: "TELE_PORT",
                message: e.to_string(),
            })?;
        }
        if let Some(d) = get("TELE_DATA_DIR") {
            self.data_dir = PathBuf::from(d);
        }
        if let Some(u) = get("TELE_PROVIDER_URL") {
            self.provider_url = if u.is_empty() { None } else { Some(u) };
        }
        Ok(())
    }

    pub fn addr(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }

    pub fn socket_addr(&self) -> Result<SocketAddr, std::net::AddrParseError> {
        self.addr().parse()
    }

    pub fn provider(&self) -> Arc<dyn EmbeddingProvider> {
        match &self.provider_url {
            Some(url) => Arc::new(RemoteEmbedder::new(url.clone(), self.provider_dim)),
            None => Arc::new(HashingEmbedder::default()),
        }
    }
}
