//! Application configuration with layered precedence:
//! command-line flags > environment > `deepcodeseek.toml` > built-in defaults.
//!
//! Auth tokens are never part of the configuration itself; the config only
//! names the environment variables that hold them.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pipeline::FirstStage;
use crate::query::{Strategy, TrimConfig};

/// Default config file looked up in the working directory.
pub const CONFIG_FILE: &str = "deepcodeseek.toml";

/// Fully resolved configuration used by every CLI command.
#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub corpus: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,

    pub embedder_endpoint: Option<String>,
    /// Name of the environment variable holding the embedder bearer token.
    pub embedder_auth_env: Option<String>,
    pub embedder_dim: usize,
    pub llm_endpoint: Option<String>,
    /// Name of the environment variable holding the LLM bearer token.
    pub llm_auth_env: Option<String>,
    pub scorer_endpoint: Option<String>,

    /// Substitute the deterministic in-process mock for a remote embedder.
    pub mock_embedder: bool,
    /// Substitute the deterministic in-process mock for a remote LLM.
    pub mock_llm: bool,
    /// Substitute the ground-truth-free constant mock for a remote scorer.
    pub mock_scorer: bool,

    pub strategy: Strategy,
    pub first_stage: FirstStage,
    pub k_retrieve: usize,
    pub rerank_depth: usize,
    pub use_kg_filter: bool,
    pub trim: TrimConfig,

    pub parallelism: usize,
    pub timeout_secs: u64,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            corpus: None,
            index_dir: None,
            embedder_endpoint: None,
            embedder_auth_env: None,
            embedder_dim: 256,
            llm_endpoint: None,
            llm_auth_env: None,
            scorer_endpoint: None,
            mock_embedder: false,
            mock_llm: false,
            mock_scorer: false,
            strategy: Strategy::Prefix,
            first_stage: FirstStage::Dense,
            k_retrieve: 40,
            rerank_depth: 40,
            use_kg_filter: false,
            trim: TrimConfig::default(),
            parallelism: 4,
            timeout_secs: 30,
        }
    }
}

/// One partial layer of settings; later layers override earlier ones
/// field-by-field.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub corpus: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub embedder_endpoint: Option<String>,
    pub embedder_auth_env: Option<String>,
    pub embedder_dim: Option<usize>,
    pub llm_endpoint: Option<String>,
    pub llm_auth_env: Option<String>,
    pub scorer_endpoint: Option<String>,
    pub mock_embedder: Option<bool>,
    pub mock_llm: Option<bool>,
    pub mock_scorer: Option<bool>,
    pub strategy: Option<String>,
    pub first_stage: Option<String>,
    pub k_retrieve: Option<usize>,
    pub rerank_depth: Option<usize>,
    pub use_kg_filter: Option<bool>,
    pub trim_max_lines: Option<usize>,
    pub trim_protect_tail_lines: Option<usize>,
    pub parallelism: Option<usize>,
    pub timeout_secs: Option<u64>,
}

impl ConfigLayer {
    /// Parse a TOML config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(&path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Read `DCS_*` environment variables into a layer.
    pub fn from_env() -> Result<Self> {
        fn var(name: &str) -> Option<String> {
            std::env::var(name).ok().filter(|v| !v.is_empty())
        }
        fn parse<T: std::str::FromStr>(name: &str) -> Result<Option<T>>
        where
            T::Err: std::fmt::Display,
        {
            var(name)
                .map(|v| {
                    v.parse::<T>()
                        .map_err(|e| Error::Config(format!("{name}={v:?}: {e}")))
                })
                .transpose()
        }
        Ok(ConfigLayer {
            corpus: var("DCS_CORPUS").map(PathBuf::from),
            index_dir: var("DCS_INDEX_DIR").map(PathBuf::from),
            embedder_endpoint: var("DCS_EMBEDDER_ENDPOINT"),
            embedder_auth_env: var("DCS_EMBEDDER_AUTH_ENV"),
            embedder_dim: parse("DCS_EMBEDDER_DIM")?,
            llm_endpoint: var("DCS_LLM_ENDPOINT"),
            llm_auth_env: var("DCS_LLM_AUTH_ENV"),
            scorer_endpoint: var("DCS_SCORER_ENDPOINT"),
            mock_embedder: parse("DCS_MOCK_EMBEDDER")?,
            mock_llm: parse("DCS_MOCK_LLM")?,
            mock_scorer: parse("DCS_MOCK_SCORER")?,
            strategy: var("DCS_STRATEGY"),
            first_stage: var("DCS_FIRST_STAGE"),
            k_retrieve: parse("DCS_K_RETRIEVE")?,
            rerank_depth: parse("DCS_RERANK_DEPTH")?,
            use_kg_filter: parse("DCS_USE_KG_FILTER")?,
            trim_max_lines: parse("DCS_TRIM_MAX_LINES")?,
            trim_protect_tail_lines: parse("DCS_TRIM_PROTECT_TAIL_LINES")?,
            parallelism: parse("DCS_PARALLELISM")?,
            timeout_secs: parse("DCS_TIMEOUT_SECS")?,
        })
    }
}

impl AppConfig {
    /// Apply a layer on top of this config; present fields win.
    pub fn apply(&mut self, layer: &ConfigLayer) -> Result<()> {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &layer.$field {
                    self.$field = Some(v.clone());
                }
            };
        }
        take!(corpus);
        take!(index_dir);
        take!(embedder_endpoint);
        take!(embedder_auth_env);
        take!(llm_endpoint);
        take!(llm_auth_env);
        take!(scorer_endpoint);
        if let Some(v) = layer.embedder_dim {
            self.embedder_dim = v;
        }
        if let Some(v) = layer.mock_embedder {
            self.mock_embedder = v;
        }
        if let Some(v) = layer.mock_llm {
            self.mock_llm = v;
        }
        if let Some(v) = layer.mock_scorer {
            self.mock_scorer = v;
        }
        if let Some(v) = &layer.strategy {
            self.strategy = v.parse().map_err(Error::Config)?;
        }
        if let Some(v) = &layer.first_stage {
            self.first_stage = v.parse().map_err(Error::Config)?;
        }
        if let Some(v) = layer.k_retrieve {
            self.k_retrieve = v;
        }
        if let Some(v) = layer.rerank_depth {
            self.rerank_depth = v;
        }
        if let Some(v) = layer.use_kg_filter {
            self.use_kg_filter = v;
        }
        if let Some(v) = layer.trim_max_lines {
            self.trim.max_lines = v;
        }
        if let Some(v) = layer.trim_protect_tail_lines {
            self.trim.protect_tail_lines = v;
        }
        if let Some(v) = layer.parallelism {
            self.parallelism = v;
        }
        if let Some(v) = layer.timeout_secs {
            self.timeout_secs = v;
        }
        Ok(())
    }

    /// Resolve defaults, then the config file (explicit path or
    /// `deepcodeseek.toml` when present), then the environment.
    pub fn load(config_path: Option<&Path>) -> Result<AppConfig> {
        let mut cfg = AppConfig::default();
        match config_path {
            Some(path) => cfg.apply(&ConfigLayer::from_file(path)?)?,
            None => {
                let default_path = Path::new(CONFIG_FILE);
                if default_path.exists() {
                    cfg.apply(&ConfigLayer::from_file(default_path)?)?;
                }
            }
        }
        cfg.apply(&ConfigLayer::from_env()?)?;
        Ok(cfg)
    }

    /// Structural checks that do not depend on any specific command.
    pub fn validate(&self) -> Result<()> {
        if self.parallelism < 1 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if self.k_retrieve < 1 {
            return Err(Error::Config("k_retrieve must be >= 1".into()));
        }
        if self.embedder_dim < 1 {
            return Err(Error::Config("embedder_dim must be >= 1".into()));
        }
        for (name, endpoint) in [
            ("embedder_endpoint", &self.embedder_endpoint),
            ("llm_endpoint", &self.llm_endpoint),
            ("scorer_endpoint", &self.scorer_endpoint),
        ] {
            if let Some(url) = endpoint {
                if !url.starts_with("http://") && !url.starts_with("https://") {
                    return Err(Error::Config(format!(
                        "{name} must be an http(s) URL, got {url:?}"
                    )));
                }
            }
        }
        self.trim.validate().map_err(|e| Error::Config(e.to_string()))
    }
}
