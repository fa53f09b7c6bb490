//! Resolved CLI configuration.
//!
//! Values come from three layers, later ones winning: a TOML file
//! (`--config`, `LITRAG_CONFIG`, or `./litrag.toml` when present), the
//! environment, and command-line flags. Relative paths in the file are
//! resolved against the file's directory.
//!
//! ```toml
//! corpus_dir = "papers"
//! index_dir = ".litrag/index"
//! state_dir = ".litrag/state"
//!
//! [provider]
//! kind = "openai"            # or "mock"
//! base_url = "https://api.openai.com/v1"
//! chat_model = "gpt-4o-mini"
//! embed_model = "text-embedding-ada-002"
//!
//! [chunking]
//! method = "semantic"
//! breakpoint_percentile = 95.0
//!
//! [engine]
//! top_k = 5
//!
//! [service]
//! bind = "127.0.0.1:8080"
//! ```
//!
//! The API key is read from `LITRAG_API_KEY` (or an `api_key` entry in the
//! file) and is never printed.

use std::path::{Path, PathBuf};

use litrag_core::workspace::{BuildOptions, ProviderKind, ProviderSettings};
use litrag_core::{ChunkingConfig, EngineConfig};
use litrag_service::{ServiceConfig, DEFAULT_BIND};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_CONFIG_FILE: &str = "litrag.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSection {
    pub bind: String,
    pub cors_origin: Option<String>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.into(),
            cors_origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub corpus_dir: PathBuf,
    pub index_dir: PathBuf,
    pub state_dir: PathBuf,
    pub provider: ProviderSettings,
    pub chunking: ChunkingConfig,
    pub build: BuildOptions,
    pub engine: EngineConfig,
    pub service: ServiceSection,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            corpus_dir: "corpus".into(),
            index_dir: ".litrag/index".into(),
            state_dir: ".litrag/state".into(),
            provider: ProviderSettings::default(),
            chunking: ChunkingConfig::default(),
            build: BuildOptions::default(),
            engine: EngineConfig::default(),
            service: ServiceSection::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus_dir: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub state_dir: Option<PathBuf>,
    pub provider: Option<ProviderKind>,
}

impl CliConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut config: CliConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for dir in [
            &mut config.corpus_dir,
            &mut config.index_dir,
            &mut config.state_dir,
        ] {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        if let Some(t) = config
            .provider
            .transcript
            .as_mut()
            .filter(|t| t.is_relative())
        {
            *t = base.join(&*t);
        }
        Ok(config)
    }

    /// Reads `path`, or the default file when it exists, or starts from
    /// built-in defaults.
    pub fn load_file(path: Option<&Path>) -> Result<Self, CliError> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None if Path::new(DEFAULT_CONFIG_FILE).is_file() => PathBuf::from(DEFAULT_CONFIG_FILE),
            None => return Ok(Self::default()),
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `LITRAG_*` variables read through `get`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), CliError> {
        if let Some(v) = get("LITRAG_CORPUS_DIR") {
            self.corpus_dir = v.into();
        }
        if let Some(v) = get("LITRAG_INDEX_DIR") {
            self.index_dir = v.into();
        }
        if let Some(v) = get("LITRAG_STATE_DIR") {
            self.state_dir = v.into();
        }
        if let Some(v) = get("LITRAG_PROVIDER") {
            self.provider.kind = v.parse().map_err(CliError::Config)?;
        }
        if let Some(v) = get("LITRAG_BIND") {
            self.service.bind = v;
        }
        if let Some(v) = get("LITRAG_CORS_ORIGIN") {
            self.service.cors_origin = Some(v);
        }
        self.provider.config.apply_env(&get);
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(v) = &o.corpus_dir {
            self.corpus_dir = v.clone();
        }
        if let Some(v) = &o.index_dir {
            self.index_dir = v.clone();
        }
        if let Some(v) = &o.state_dir {
            self.state_dir = v.clone();
        }
        if let Some(v) = o.provider {
            self.provider.kind = v;
        }
    }

    /// File, then environment, then flags.
    pub fn resolve(
        file: Option<&Path>,
        get: impl Fn(&str) -> Option<String>,
        overrides: &Overrides,
    ) -> Result<Self, CliError> {
        let file = file
            .map(Path::to_path_buf)
            .or_else(|| get("LITRAG_CONFIG").map(PathBuf::from));
        let mut config = Self::load_file(file.as_deref())?;
        config.apply_env(&get)?;
        config.apply_overrides(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.chunking
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.engine
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.provider.kind == ProviderKind::OpenAi {
            self.provider
                .config
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn max_in_flight(&self) -> usize {
        self.provider.config.max_in_flight.max(1)
    }

    pub fn service_config(&self) -> ServiceConfig {
        ServiceConfig {
            index_dir: self.index_dir.clone(),
            state_dir: self.state_dir.clone(),
            bind: self.service.bind.clone(),
            cors_origin: self.service.cors_origin.clone(),
            chunking: self.chunking.clone(),
            build: self.build.clone(),
            engine: self.engine.clone(),
            max_in_flight: self.max_in_flight(),
        }
    }

    /// TOML rendering for `config show`. The API key is omitted; only
    /// whether one is set is reported.
    pub fn to_toml(&self) -> String {
        let body = toml::to_string_pretty(self).expect("config serializes");
        let key = if self.provider.config.api_key.is_empty() {
            "unset"
        } else {
            "set"
        };
        format!("# api key: {key}\n{body}")
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("litrag.toml");
        std::fs::write(&file, "index_dir = \"from-file\"\nstate_dir = \"state\"\ncorpus_dir = \"/abs/papers\"\n[provider]\nkind = \"mock\"\nchat_model = \"file-model\"\n").unwrap();
        let get = env(&[
            ("LITRAG_INDEX_DIR", "from-env"),
            ("LITRAG_CHAT_MODEL", "env-model"),
        ]);

        let plain = CliConfig::resolve(Some(&file), &get, &Overrides::default()).unwrap();
        assert_eq!(plain.index_dir, PathBuf::from("from-env"));
        assert_eq!(plain.state_dir, dir.path().join("state"));
        assert_eq!(plain.corpus_dir, PathBuf::from("/abs/papers"));
        assert_eq!(plain.provider.kind, ProviderKind::Mock);
        assert_eq!(plain.provider.config.chat_model, "env-model");

        let flags = Overrides {
            index_dir: Some("from-flag".into()),
            provider: Some(ProviderKind::OpenAi),
            ..Default::default()
        };
        let flagged = CliConfig::resolve(Some(&file), &get, &flags).unwrap();
        assert_eq!(flagged.index_dir, PathBuf::from("from-flag"));
        assert_eq!(flagged.provider.kind, ProviderKind::OpenAi);
    }

    #[test]
    fn config_file_is_found_through_env() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("custom.toml");
        std::fs::write(&file, "[engine]\ntop_k = 9\n").unwrap();
        let path = file.to_string_lossy().into_owned();
        let config = CliConfig::resolve(
            None,
            env(&[("LITRAG_CONFIG", &path)]),
            &Overrides::default(),
        )
        .unwrap();
        assert_eq!(config.engine.top_k, 9);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            CliConfig::from_toml("bogus = 1", dir.path()),
            Err(CliError::Config(_))
        ));
        let file = dir.path().join("bad.toml");
        std::fs::write(&file, "[engine]\ntop_k = 0\n").unwrap();
        assert!(matches!(
            CliConfig::resolve(Some(&file), env(&[]), &Overrides::default()),
            Err(CliError::Config(_))
        ));
        assert!(CliConfig::resolve(
            None,
            env(&[("LITRAG_PROVIDER", "acme")]),
            &Overrides::default()
        )
        .is_err());
    }

    #[test]
    fn shown_config_never_contains_the_key() {
        let mut config = CliConfig::default();
        config
            .apply_env(env(&[("LITRAG_API_KEY", "sk-very-secret")]))
            .unwrap();
        let shown = config.to_toml();
        assert!(!shown.contains("sk-very-secret"));
        assert!(shown.starts_with("# api key: set"));
        let reparsed =
            CliConfig::from_toml(shown.split_once('\n').unwrap().1, Path::new("")).unwrap();
        assert_eq!(reparsed.engine, config.engine);
        assert_eq!(reparsed.chunking, config.chunking);
    }
}
