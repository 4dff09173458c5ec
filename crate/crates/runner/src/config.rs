//! Experiment configuration: one JSON file, paths relative to the file.
//!
//! ```json
//! {
//!   "name": "qwen-monolithic",
//!   "goals": "goals.jsonl",
//!   "store": { "restaurant": "db/restaurant.jsonl", "hotel": "db/hotel.jsonl", "train": "db/train.jsonl" },
//!   "architecture": "monolithic",
//!   "user":   { "backend": "remote", "label": "qwen2.5-32b",
//!               "endpoint": { "base_url": "http://localhost:8000/v1", "model": "qwen2.5-32b", "api_key_env": "TOKEN" } },
//!   "system": { "backend": "scripted", "label": "scripted", "scripts": "scripts.json" },
//!   "seeds": [0],
//!   "concurrency": 4,
//!   "game": { "max_user_turns": 15 },
//!   "prices": "prices.json"
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use todsim_core::dialogue_systems::Architecture;
use todsim_core::domain::Domain;
use todsim_core::players::EndpointConfig;
use todsim_core::GameConfig;

pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// `field` is the JSON path of the offending value, e.g. `store.hotel`.
    #[error("{file}: invalid config at `{field}`: {message}")]
    Invalid { file: PathBuf, field: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlayerSpec {
    /// Replays per-goal scripts from a [`todsim_core::scripted::ScriptBook`] file.
    Scripted { label: String, scripts: PathBuf },
    Remote { label: String, endpoint: EndpointConfig },
}

impl PlayerSpec {
    pub fn label(&self) -> &str {
        match self {
            PlayerSpec::Scripted { label, .. } | PlayerSpec::Remote { label, .. } => label,
        }
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self, PlayerSpec::Scripted { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    /// Fixed 100 ms per event; makes reruns byte-identical.
    Logical,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorePaths {
    pub restaurant: PathBuf,
    pub hotel: PathBuf,
    pub train: PathBuf,
}

impl StorePaths {
    pub fn by_domain(&self) -> BTreeMap<Domain, PathBuf> {
        BTreeMap::from([
            (Domain::Restaurant, self.restaurant.clone()),
            (Domain::Hotel, self.hotel.clone()),
            (Domain::Train, self.train.clone()),
        ])
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub goals: PathBuf,
    pub store: StorePaths,
    pub architecture: Architecture,
    pub user: PlayerSpec,
    pub system: PlayerSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub game: GameConfig,
    /// Defaults to logical when both players are scripted, wall otherwise.
    #[serde(default)]
    pub clock: Option<ClockKind>,
    /// Price table keyed by player label.
    #[serde(default)]
    pub prices: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn from_json(text: &str, file: &Path, base: &Path) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Invalid {
            file: file.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.resolve(base);
        cfg.validate(file)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, path, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.goals);
        fix(&mut self.store.restaurant);
        fix(&mut self.store.hotel);
        fix(&mut self.store.train);
        for spec in [&mut self.user, &mut self.system] {
            if let PlayerSpec::Scripted { scripts, .. } = spec {
                fix(scripts);
            }
        }
        if let Some(p) = &mut self.prices {
            fix(p);
        }
    }

    fn validate(&self, file: &Path) -> Result<(), ConfigError> {
        let bad = |field: &str, message: String| {
            Err(ConfigError::Invalid { file: file.to_path_buf(), field: field.into(), message })
        };
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return bad("name", "must be a non-empty name without path separators".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency", "must be at least 1".into());
        }
        if let Err(e) = self.game.validate() {
            return bad("game", e.to_string());
        }
        for (field, spec) in [("user", &self.user), ("system", &self.system)] {
            if spec.label().trim().is_empty() {
                return bad(&format!("{field}.label"), "must not be empty".into());
            }
        }
        Ok(())
    }

    pub fn clock(&self) -> ClockKind {
        self.clock.unwrap_or(if self.user.is_scripted() && self.system.is_scripted() {
            ClockKind::Logical
        } else {
            ClockKind::Wall
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t",
        "goals": "goals.jsonl",
        "store": {"restaurant": "r.jsonl", "hotel": "/abs/h.jsonl", "train": "t.jsonl"},
        "architecture": "modular_prog",
        "user": {"backend": "scripted", "label": "us", "scripts": "s.json"},
        "system": {"backend": "remote", "label": "ds", "endpoint": {"base_url": "http://x/v1", "model": "m"}}
    }"#;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_json(text, Path::new("cfg.json"), Path::new("/base"))
    }

    #[test]
    fn defaults_and_path_resolution() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.concurrency, 4);
        assert_eq!(cfg.game, GameConfig::default());
        assert_eq!(cfg.goals, PathBuf::from("/base/goals.jsonl"));
        assert_eq!(cfg.store.hotel, PathBuf::from("/abs/h.jsonl"));
        assert_eq!(cfg.clock(), ClockKind::Wall);
    }

    fn field_of(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { field, .. } => field,
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_store_path_names_the_field() {
        let text = MINIMAL.replace(r#""hotel": "/abs/h.jsonl", "#, "");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("hotel"), "{err}");
        assert_eq!(field_of(err), "store");
    }

    #[test]
    fn nested_errors_carry_paths() {
        let text = MINIMAL.replace(r#""model": "m""#, r#""model": "m", "temperature": 1"#);
        // tagged enums buffer their content, so the path stops at the player
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("temperature"), "{err}");
        assert_eq!(field_of(err), "system");
        let text = MINIMAL.replace(r#""architecture": "modular_prog""#, r#""architecture": "pipeline""#);
        assert_eq!(field_of(parse(&text).unwrap_err()), "architecture");
        let text = MINIMAL.replace(r#""name": "t""#, r#""name": "t", "concurrency": 0"#);
        assert_eq!(field_of(parse(&text).unwrap_err()), "concurrency");
        let text = MINIMAL.replace(r#""name": "t""#, r#""name": "t", "game": {"max_user_turns": "15"}"#);
        assert_eq!(field_of(parse(&text).unwrap_err()), "game.max_user_turns");
    }
}
