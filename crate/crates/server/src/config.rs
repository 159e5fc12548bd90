//! Server configuration file and `PLINE_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "PLINE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub plugin_dir: PathBuf,
    pub work_dir: PathBuf,
    #[serde(default = "default_max_jobs")]
    pub max_jobs: usize,
    #[serde(default = "default_max_upload")]
    pub max_upload_bytes: u64,
    #[serde(default)]
    pub open_browser: bool,
    /// Web client assets served at `/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_dir: Option<PathBuf>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_max_jobs() -> usize {
    2
}

fn default_max_upload() -> u64 {
    256 * 1024 * 1024
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid value for {var}: '{value}'")]
    Env { var: String, value: String },
    #[error("max_jobs must be at least 1")]
    MaxJobs,
    #[error("{what} {path} is not usable: {reason}")]
    Directory { what: &'static str, path: PathBuf, reason: String },
}

impl ServerConfig {
    pub fn new(plugin_dir: impl Into<PathBuf>, work_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            listen: default_listen(),
            plugin_dir: plugin_dir.into(),
            work_dir: work_dir.into(),
            max_jobs: default_max_jobs(),
            max_upload_bytes: default_max_upload(),
            open_browser: false,
            static_dir: None,
        }
    }

    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut cfg: ServerConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
        cfg.plugin_dir = base.join(&cfg.plugin_dir);
        cfg.work_dir = base.join(&cfg.work_dir);
        cfg.static_dir = cfg.static_dir.map(|d| base.join(d));
        Ok(cfg)
    }

    /// Applies `PLINE_LISTEN`, `PLINE_PLUGIN_DIR`, `PLINE_WORK_DIR`, `PLINE_MAX_JOBS`,
    /// `PLINE_MAX_UPLOAD_BYTES`, `PLINE_OPEN_BROWSER` and `PLINE_STATIC_DIR`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let var = |name: &str| get(&format!("{ENV_PREFIX}{name}"));
        let bad = |name: &str, value: String| ConfigError::Env { var: format!("{ENV_PREFIX}{name}"), value };
        if let Some(v) = var("LISTEN") {
            self.listen = v;
        }
        if let Some(v) = var("PLUGIN_DIR") {
            self.plugin_dir = v.into();
        }
        if let Some(v) = var("WORK_DIR") {
            self.work_dir = v.into();
        }
        if let Some(v) = var("STATIC_DIR") {
            self.static_dir = Some(v.into());
        }
        if let Some(v) = var("MAX_JOBS") {
            self.max_jobs = v.parse().map_err(|_| bad("MAX_JOBS", v))?;
        }
        if let Some(v) = var("MAX_UPLOAD_BYTES") {
            self.max_upload_bytes = v.parse().map_err(|_| bad("MAX_UPLOAD_BYTES", v))?;
        }
        if let Some(v) = var("OPEN_BROWSER") {
            self.open_browser = match v.as_str() {
                "1" | "true" | "yes" => true,
                "0" | "false" | "no" => false,
                _ => return Err(bad("OPEN_BROWSER", v)),
            };
        }
        Ok(())
    }

    /// Checks the startup invariants, creating the work directory if needed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_jobs == 0 {
            return Err(ConfigError::MaxJobs);
        }
        if !self.plugin_dir.is_dir() {
            return Err(ConfigError::Directory {
                what: "plugin_dir",
                path: self.plugin_dir.clone(),
                reason: "not a directory".into(),
            });
        }
        let dir_err = |reason: String| ConfigError::Directory { what: "work_dir", path: self.work_dir.clone(), reason };
        std::fs::create_dir_all(&self.work_dir).map_err(|e| dir_err(e.to_string()))?;
        let probe = self.work_dir.join(".pline-write-test");
        std::fs::write(&probe, b"").map_err(|e| dir_err(e.to_string()))?;
        let _ = std::fs::remove_file(probe);
        Ok(())
    }
}
