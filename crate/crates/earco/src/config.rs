//! Run configuration: one TOML file plus environment-variable overrides
//! for endpoints and secrets.
//!
//! Backend specs are strings: `test` for the built-in scripted backend,
//! `mock:<path>` for a scripted backend loaded from a file, or an
//! `http(s)://` chat-completions URL. API keys are never read from the
//! file, only from `EARCO_<ROLE>_KEY`; `EARCO_<ROLE>_URL` overrides the
//! configured spec.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingBackend, HashEmbeddingBackend, HttpEmbeddingBackend};
use crate::gateway::{
    mock::builtin_test_script, Gateway, HttpBackend, MockScript, RetryPolicy, Role,
    ScriptedBackend,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required value for field {field} (set {hint})")]
    MissingField { field: &'static str, hint: &'static str },
    #[error("invalid value for field {field}: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub optimizer: String,
    pub generator: String,
    pub summarizer: String,
    pub judge: String,
    pub embedding: String,
    pub embedding_dim: usize,
    /// Optional model names sent on the chat-completions wire.
    pub optimizer_model: Option<String>,
    pub generator_model: Option<String>,
    pub summarizer_model: Option<String>,
    pub judge_model: Option<String>,
    pub embedding_model: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            optimizer: "test".to_string(),
            generator: "test".to_string(),
            summarizer: "test".to_string(),
            judge: "test".to_string(),
            embedding: "test".to_string(),
            embedding_dim: 32,
            optimizer_model: None,
            generator_model: None,
            summarizer_model: None,
            judge_model: None,
            embedding_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub prompt: Option<PathBuf>,
    pub results: Option<PathBuf>,
    /// Response-cache directory; unset disables caching.
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub concurrency: usize,
    pub retrieval_k: usize,
    /// Optimizer-role call budget a run is expected to stay within.
    pub call_budget: u64,
    /// Default prompt mode for `infer` when `--mode` is omitted.
    pub mode: Option<String>,
    pub backends: BackendConfig,
    pub paths: PathsConfig,
    pub optimization: crate::optimizer::OptimizationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            concurrency: 4,
            retrieval_k: 10,
            call_budget: 100,
            mode: None,
            backends: BackendConfig::default(),
            paths: PathsConfig::default(),
            optimization: crate::optimizer::OptimizationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source: Box::new(source) })?;
        config.apply_env_overrides();
        Ok(config)
    }

    /// `EARCO_<ROLE>_URL` overrides the backend spec per role.
    pub fn apply_env_overrides(&mut self) {
        let from_env = |var: &str, slot: &mut String| {
            if let Ok(value) = std::env::var(var) {
                if !value.is_empty() {
                    *slot = value;
                }
            }
        };
        from_env("EARCO_OPTIMIZER_URL", &mut self.backends.optimizer);
        from_env("EARCO_GENERATOR_URL", &mut self.backends.generator);
        from_env("EARCO_SUMMARIZER_URL", &mut self.backends.summarizer);
        from_env("EARCO_JUDGE_URL", &mut self.backends.judge);
        from_env("EARCO_EMBEDDING_URL", &mut self.backends.embedding);
    }

    /// Force every role (chat and embedding) onto one backend spec; the
    /// CLI's `--backend test` hook.
    pub fn override_backends(&mut self, spec: &str) {
        for slot in [
            &mut self.backends.optimizer,
            &mut self.backends.generator,
            &mut self.backends.summarizer,
            &mut self.backends.judge,
            &mut self.backends.embedding,
        ] {
            *slot = spec.to_string();
        }
    }

    fn role_spec(&self, role: Role) -> (&str, Option<&String>) {
        match role {
            Role::Optimizer => (&self.backends.optimizer, self.backends.optimizer_model.as_ref()),
            Role::Generator => (&self.backends.generator, self.backends.generator_model.as_ref()),
            Role::Summarizer => {
                (&self.backends.summarizer, self.backends.summarizer_model.as_ref())
            }
            Role::Judge => (&self.backends.judge, self.backends.judge_model.as_ref()),
        }
    }

    /// Build the gateway with every configured role backend, the cache
    /// directory, and the concurrency bound.
    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let mut builder = Gateway::builder().concurrency(self.concurrency);
        for role in Role::ALL {
            let (spec, model) = self.role_spec(role);
            builder = builder.backend(role, chat_backend(spec, role, model.cloned())?);
        }
        if let Some(cache) = &self.paths.cache {
            builder = builder.cache_dir(cache);
        }
        // Scripted runs should not sleep between retries.
        if self.all_backends_offline() {
            builder = builder.retry(RetryPolicy::immediate(2));
        }
        Ok(builder.build())
    }

    fn all_backends_offline(&self) -> bool {
        [
            &self.backends.optimizer,
            &self.backends.generator,
            &self.backends.summarizer,
            &self.backends.judge,
        ]
        .iter()
        .all(|spec| !spec.starts_with("http"))
    }

    pub fn build_embedding_backend(&self) -> Result<Box<dyn EmbeddingBackend>, ConfigError> {
        let dim = self.backends.embedding_dim;
        if dim == 0 {
            return Err(ConfigError::InvalidField {
                field: "backends.embedding_dim".to_string(),
                reason: "must be positive".to_string(),
            });
        }
        let spec = self.backends.embedding.as_str();
        if spec == "test" || spec.starts_with("mock") {
            return Ok(Box::new(HashEmbeddingBackend::new(dim)));
        }
        if spec.starts_with("http://") || spec.starts_with("https://") {
            let key = std::env::var("EARCO_EMBEDDING_KEY").ok();
            return Ok(Box::new(HttpEmbeddingBackend::new(
                spec.to_string(),
                key,
                self.backends.embedding_model.clone(),
                dim,
            )));
        }
        Err(ConfigError::InvalidField {
            field: "backends.embedding".to_string(),
            reason: format!("expected \"test\" or an http(s) URL, got {spec:?}"),
        })
    }
}

/// Resolve a backend spec string into a chat backend.
pub fn chat_backend(
    spec: &str,
    role: Role,
    model: Option<String>,
) -> Result<Arc<dyn crate::gateway::ChatBackend>, ConfigError> {
    if spec == "test" {
        return Ok(Arc::new(ScriptedBackend::new(builtin_test_script()).with_id("test")));
    }
    if let Some(path) = spec.strip_prefix("mock:") {
        let script = MockScript::load(Path::new(path)).map_err(|e| ConfigError::InvalidField {
            field: format!("backends.{role}"),
            reason: e.to_string(),
        })?;
        return Ok(Arc::new(ScriptedBackend::new(script).with_id(format!("mock:{path}"))));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        let key_var = format!("EARCO_{}_KEY", role.as_str().to_uppercase());
        let key = std::env::var(key_var).ok();
        return Ok(Arc::new(HttpBackend::new(spec, key, model)));
    }
    Err(ConfigError::InvalidField {
        field: format!("backends.{role}"),
        reason: format!("expected \"test\", \"mock:<path>\", or an http(s) URL, got {spec:?}"),
    })
}
