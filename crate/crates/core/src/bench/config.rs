use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::buffer::EvictionPolicy;
use crate::memory::{Embedder, MemoryConfig};
use crate::navigator::SearchLimits;
use crate::oracle::RemoteConfig;
use crate::runtime::{Components, PolicyKind, RuntimeConfig, DEFAULT_EXPLORATION_HORIZON};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config value {field}: {msg}")]
    Invalid { field: &'static str, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Reflection,
    Navigation,
    FailedTrajectories,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Scripted { rules: PathBuf },
    Remote(RemoteConfig),
}

/// Every tunable of a run. Paths are resolved against the config file's
/// directory by [`RunConfig::from_file`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: PathBuf,
    pub seed: u64,
    pub rounds: usize,
    pub parallelism: usize,
    pub capacity: usize,
    pub eviction: EvictionPolicy,
    pub horizon_cap: usize,
    pub exploration_horizon: usize,
    pub k: usize,
    pub dedup_threshold: f64,
    pub min_similarity: f64,
    pub embedder: Embedder,
    pub trust_ground_truth: bool,
    pub max_oracle_calls: Option<usize>,
    pub policy: PolicyKind,
    pub ablate: Vec<Ablation>,
    pub search: SearchLimits,
    pub oracle: OracleSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rt = RuntimeConfig::default();
        let mem = MemoryConfig::default();
        RunConfig {
            world: PathBuf::new(),
            seed: 0,
            rounds: 5,
            parallelism: 1,
            capacity: crate::buffer::DEFAULT_CAPACITY,
            eviction: EvictionPolicy::Lru,
            horizon_cap: rt.horizon_cap,
            exploration_horizon: DEFAULT_EXPLORATION_HORIZON,
            k: mem.k,
            dedup_threshold: mem.dedup_threshold,
            min_similarity: mem.min_similarity,
            embedder: Embedder::default(),
            trust_ground_truth: false,
            max_oracle_calls: rt.max_oracle_calls,
            policy: PolicyKind::Keyword,
            ablate: Vec::new(),
            search: SearchLimits::default(),
            oracle: OracleSpec::Scripted {
                rules: PathBuf::new(),
            },
        }
    }
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.check_ranges()?;
        Ok(cfg)
    }

    /// Parses, resolves relative paths and checks that referenced files exist.
    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.world);
        if let OracleSpec::Scripted { rules } = &mut self.oracle {
            fix(rules);
        }
    }

    pub fn check_ranges(&self) -> Result<(), ConfigError> {
        let unit = |field, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(field, format!("{v} is outside [0, 1]")))
            }
        };
        unit("dedup_threshold", self.dedup_threshold)?;
        unit("min_similarity", self.min_similarity)?;
        let positive = |field, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(invalid(field, "must be at least 1"))
            }
        };
        positive("rounds", self.rounds)?;
        positive("parallelism", self.parallelism)?;
        positive("capacity", self.capacity)?;
        positive("horizon_cap", self.horizon_cap)?;
        positive("exploration_horizon", self.exploration_horizon)?;
        positive("k", self.k)?;
        positive("search.max_expansions", self.search.max_expansions)?;
        positive("search.candidate_cap", self.search.candidate_cap)?;
        if !(self.search.heuristic_weight.is_finite() && self.search.heuristic_weight >= 0.0) {
            return Err(invalid("search.heuristic_weight", "must be a finite non-negative number"));
        }
        if self.embedder.dim() == 0 {
            return Err(invalid("embedder.dim", "must be at least 1"));
        }
        if self.max_oracle_calls == Some(0) {
            return Err(invalid("max_oracle_calls", "must be at least 1 when set"));
        }
        if let OracleSpec::Remote(r) = &self.oracle {
            if !(r.endpoint.starts_with("http://") || r.endpoint.starts_with("https://")) {
                return Err(invalid("oracle.endpoint", "must be an http(s) URL"));
            }
        }
        Ok(())
    }

    pub fn check_files(&self) -> Result<(), ConfigError> {
        if !self.world.is_file() {
            return Err(invalid("world", format!("{} does not exist", self.world.display())));
        }
        if let OracleSpec::Scripted { rules } = &self.oracle {
            if !rules.is_file() {
                return Err(invalid("oracle.rules", format!("{} does not exist", rules.display())));
            }
        }
        Ok(())
    }

    pub fn components(&self) -> Components {
        Components {
            reflection: !self.ablate.contains(&Ablation::Reflection),
            navigation: !self.ablate.contains(&Ablation::Navigation),
            failed_trajectories: !self.ablate.contains(&Ablation::FailedTrajectories),
        }
    }

    pub fn runtime(&self) -> RuntimeConfig {
        RuntimeConfig {
            exploration_horizon: self.exploration_horizon,
            horizon_cap: self.horizon_cap,
            k: self.k,
            search: self.search,
            trust_ground_truth: self.trust_ground_truth,
            components: self.components(),
            seed: self.seed,
            parallelism: self.parallelism,
            max_oracle_calls: self.max_oracle_calls,
        }
    }

    pub fn memory(&self) -> MemoryConfig {
        MemoryConfig {
            dedup_threshold: self.dedup_threshold,
            min_similarity: self.min_similarity,
            k: self.k,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring file locations so the
    /// same settings hash equally wherever the files live.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.world = PathBuf::new();
        if let OracleSpec::Scripted { rules } = &mut c.oracle {
            *rules = PathBuf::new();
        }
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
