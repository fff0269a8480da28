//! Harness configuration file (TOML).
//!
//! ```toml
//! [manifest]
//! name = "aitw-general"
//! format = "aitw_jsonl"
//! subsets = [{ tag = "general", path = "data/general.jsonl" }]
//! split = { kind = "fractions", train = 0.8, dev = 0.1, test = 0.1, seed = 0 }
//!
//! [cep]
//! h = 8
//! history_mode = "full_actions"
//!
//! [match]
//! coord_tau = 0.14
//!
//! [backend]
//! kind = "stdio"
//! program = "python3"
//! args = ["agent.py"]
//!
//! [run]
//! parallelism = 4
//! seed = 7
//! failure_budget = 3
//! timeout_ms = 30000
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Every section except `[manifest]` is optional.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cep::CepConfig;
use crate::eval::MatchConfig;
use crate::gateway::{
    BackendFactory, RandomBackend, ReplayBackend, RunConfig, ScriptedBackend, StdioSpec,
};
use crate::ingest::DatasetManifest;
use crate::model::Episode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAnswer {
    pub episode_id: String,
    pub step_index: usize,
    pub action_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Replay,
    Scripted {
        default: String,
        #[serde(default)]
        steps: Vec<ScriptedAnswer>,
    },
    /// Seeded random CAP actions; the seed defaults to `[run].seed`.
    Random {
        #[serde(default)]
        seed: Option<u64>,
    },
    Stdio(StdioSpec),
    Http {
        url: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub manifest: DatasetManifest,
    #[serde(default)]
    pub cep: CepConfig,
    #[serde(default, rename = "match")]
    pub matching: MatchConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl HarnessConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: HarnessConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.manifest
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.matching.validate().map_err(ConfigError::Invalid)?;
        if self.cep.max_len == 0 {
            return Err(ConfigError::Invalid("cep.max_len must be positive".into()));
        }
        if self.run.parallelism == 0 {
            return Err(ConfigError::Invalid(
                "run.parallelism must be at least 1".into(),
            ));
        }
        match &self.backend {
            BackendConfig::Stdio(spec) if spec.program.trim().is_empty() => {
                Err(ConfigError::Invalid("backend.program is empty".into()))
            }
            BackendConfig::Http { url }
                if !url.starts_with("http://") && !url.starts_with("https://") =>
            {
                Err(ConfigError::Invalid(format!(
                    "backend.url {url:?} is not an http(s) URL"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Backend factory for a run over `episodes` (the replay policy answers
    /// from them).
    pub fn backend_factory(
        &self,
        episodes: &[Episode],
    ) -> Result<Box<dyn BackendFactory>, ConfigError> {
        Ok(match &self.backend {
            BackendConfig::Replay => Box::new(
                ReplayBackend::new(episodes, &self.matching.cap())
                    .map_err(|e| ConfigError::Invalid(format!("replay: {e}")))?,
            ),
            BackendConfig::Scripted { default, steps } => {
                let per_step: HashMap<(String, usize), String> = steps
                    .iter()
                    .map(|s| ((s.episode_id.clone(), s.step_index), s.action_text.clone()))
                    .collect();
                Box::new(ScriptedBackend::with_steps(default.clone(), per_step))
            }
            BackendConfig::Random { seed } => Box::new(RandomBackend {
                seed: seed.unwrap_or(self.run.seed),
            }),
            BackendConfig::Stdio(spec) => Box::new(spec.clone()),
            #[cfg(not(target_arch = "wasm32"))]
            BackendConfig::Http { url } => Box::new(crate::gateway::HttpBackend::new(url.clone())),
            #[cfg(target_arch = "wasm32")]
            BackendConfig::Http { .. } => {
                return Err(ConfigError::Invalid(
                    "http backend is unavailable on this target".into(),
                ))
            }
        })
    }
}

/// Reads a standalone manifest file (the `[manifest]` table on its own).
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut m: DatasetManifest = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    m.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(m)
}
