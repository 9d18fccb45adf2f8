//! Run configuration file.
//!
//! ```toml
//! threads = 4
//! repeats = 7
//! mix = "mix.toml"        # relative to this file
//! baseline = "F16"
//! json = false
//!
//! [bench]
//! depth = 2
//! width = 2048
//! pp = 512
//! tg = 128
//! seed = 0
//! ```
//!
//! Every value is optional. Command-line flags override the file, and the
//! file overrides built-in defaults. The thread count falls back to
//! [`THREADS_ENV`] before the built-in default of 1.

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const THREADS_ENV: &str = "KQUANT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("{origin}: thread count must be a positive integer, got `{value}`")]
    Threads { origin: &'static str, value: String },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub pp: Option<usize>,
    pub tg: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub threads: Option<usize>,
    pub repeats: Option<usize>,
    pub mix: Option<PathBuf>,
    pub baseline: Option<String>,
    pub json: Option<bool>,
    #[serde(default)]
    pub bench: BenchSection,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        if let Some(mix) = &cfg.mix {
            if mix.is_relative() {
                cfg.mix = Some(path.parent().unwrap_or(Path::new("")).join(mix));
            }
        }
        if cfg.threads == Some(0) {
            return Err(ConfigError::Threads {
                origin: "config",
                value: "0".into(),
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Thread count from, in order: the flag, this file, the environment
    /// value, 1.
    pub fn threads(&self, flag: Option<usize>, env: Option<&str>) -> Result<usize, ConfigError> {
        if flag == Some(0) {
            return Err(ConfigError::Threads {
                origin: "--threads",
                value: "0".into(),
            });
        }
        if let Some(t) = flag.or(self.threads) {
            return Ok(t);
        }
        match env {
            Some(v) => match v.trim().parse::<usize>() {
                Ok(t) if t > 0 => Ok(t),
                _ => Err(ConfigError::Threads {
                    origin: THREADS_ENV,
                    value: v.into(),
                }),
            },
            None => Ok(1),
        }
    }
}
