//! Uniform chat-completion access for every model role.
//!
//! One [`Gateway`] fronts four logical roles (optimizer, generator,
//! summarizer, judge), each of which may be served by a remote
//! chat-completions endpoint, a scripted mock, or nothing at all (calls
//! to an unconfigured role fail fast). The gateway owns the
//! cross-cutting concerns: bounded in-flight calls, retries with
//! exponential backoff, an optional content-addressed response cache,
//! and per-role call accounting that tests use to assert optimization
//! budgets and offline runs.

pub mod http;
pub mod mock;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::runtime::Semaphore;

pub use http::HttpBackend;
pub use mock::{MockRule, MockScript, ScriptedBackend};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("remote returned status {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("mock script matched no rule and has no default response")]
    UnmatchedRequest,
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("no backend configured for role {0}")]
    MissingBackend(Role),
    #[error("cache io error: {0}")]
    CacheIo(std::io::Error),
}

impl GatewayError {
    /// Transient failures worth retrying: transport errors, and the
    /// classic retryable statuses (408, 429, 5xx).
    fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport { .. } => true,
            GatewayError::Remote { status, .. } => {
                matches!(status, 408 | 429) || (500..600).contains(status)
            }
            _ => false,
        }
    }
}

/// Which model a request is destined for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Optimizer,
    Generator,
    Summarizer,
    Judge,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Optimizer, Role::Generator, Role::Summarizer, Role::Judge];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Optimizer => "optimizer",
            Role::Generator => "generator",
            Role::Summarizer => "summarizer",
            Role::Judge => "judge",
        }
    }

    fn idx(&self) -> usize {
        match self {
            Role::Optimizer => 0,
            Role::Generator => 1,
            Role::Summarizer => 2,
            Role::Judge => 3,
        }
    }

    /// Default sampling temperature per role: deterministic generation and
    /// judging, diverse mutation.
    pub fn default_temperature(&self) -> f32 {
        match self {
            Role::Optimizer => 0.7,
            _ => 0.0,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

impl ChatRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }
}

/// Generation defaults: near-zero temperature and a 200-token cap keep
/// root-cause outputs reproducible and OCE-readable.
pub const DEFAULT_GENERATION_TEMPERATURE: f32 = 0.0;
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_new_tokens: u32,
    pub model_role: Role,
}

impl ChatRequest {
    /// Request with the role's default temperature and token cap, from an
    /// optional system message plus one user message.
    pub fn new(role: Role, system: Option<&str>, user: impl Into<String>) -> Self {
        let mut messages = Vec::new();
        if let Some(system) = system {
            if !system.is_empty() {
                messages.push(ChatMessage::system(system));
            }
        }
        messages.push(ChatMessage::user(user));
        Self {
            messages,
            temperature: role.default_temperature(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            model_role: role,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".to_string()));
        }
        if self.messages.last().map(|m| m.role) != Some(ChatRole::User) {
            return Err(GatewayError::InvalidRequest(
                "last message must have role user".to_string(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".to_string()));
        }
        if self.max_new_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_new_tokens must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: TokenUsage,
    pub backend_id: String,
}

/// A concrete model endpoint: remote HTTP or scripted mock.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
    fn is_remote(&self) -> bool {
        false
    }
}

/// Stable content digest of a request; the cache file name.
///
/// Keyed over every request field: two requests differing only in
/// temperature hash differently.
pub fn cache_key(request: &ChatRequest) -> String {
    let canonical = serde_json::to_string(request).expect("request serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").unwrap();
    }
    hex
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt; total attempts = max_retries + 1.
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 2, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests.
    pub fn immediate(max_retries: u32) -> Self {
        Self { max_retries, base_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        // 1x, 2x, 4x, ... capped at 60s.
        let factor = 1u32 << attempt.min(5);
        (self.base_delay * factor).min(Duration::from_secs(60))
    }
}

#[derive(Debug, Default)]
struct CallCounters {
    per_role: [AtomicU64; 4],
    remote: AtomicU64,
    cache_hits: AtomicU64,
}

/// Routes chat requests to per-role backends with retries, caching, and
/// call accounting. Safe for concurrent callers.
pub struct Gateway {
    backends: HashMap<Role, Arc<dyn ChatBackend>>,
    retry: RetryPolicy,
    cache_dir: Option<PathBuf>,
    counters: CallCounters,
    semaphore: Semaphore,
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder::default()
    }

    /// Gateway serving every role from one shared backend; the common
    /// mock-test setup.
    pub fn single_backend(backend: Arc<dyn ChatBackend>) -> Self {
        let mut builder = Gateway::builder();
        for role in Role::ALL {
            builder = builder.backend(role, backend.clone());
        }
        builder.retry(RetryPolicy::immediate(2)).build()
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let backend = self
            .backends
            .get(&request.model_role)
            .ok_or(GatewayError::MissingBackend(request.model_role))?;

        let key = self.cache_dir.as_ref().map(|_| cache_key(request));
        if let Some(cached) = self.cache_lookup(key.as_deref())? {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(cached);
        }

        let response = self.call_with_retry(backend.as_ref(), request)?;
        self.cache_store(key.as_deref(), &response)?;
        Ok(response)
    }

    fn call_with_retry(
        &self,
        backend: &dyn ChatBackend,
        request: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        let attempts = self.retry.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            let result = {
                let _permit = self.semaphore.acquire();
                self.counters.per_role[request.model_role.idx()].fetch_add(1, Ordering::Relaxed);
                if backend.is_remote() {
                    self.counters.remote.fetch_add(1, Ordering::Relaxed);
                }
                backend.complete(request)
            };
            match result {
                Ok(response) => return Ok(response),
                Err(err) if err.is_retryable() && attempt + 1 < attempts => {
                    last_error = err.to_string();
                    let delay = self.retry.delay(attempt);
                    tracing::warn!(
                        role = %request.model_role,
                        attempt = attempt + 1,
                        "gateway call failed ({last_error}); retrying in {delay:?}"
                    );
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
                Err(err) if err.is_retryable() => {
                    last_error = err.to_string();
                    return Err(GatewayError::Transport { attempts, detail: last_error });
                }
                Err(err) => return Err(err),
            }
        }
        Err(GatewayError::Transport { attempts, detail: last_error })
    }

    fn cache_lookup(&self, key: Option<&str>) -> Result<Option<ChatResponse>, GatewayError> {
        let (dir, key) = match (&self.cache_dir, key) {
            (Some(dir), Some(key)) => (dir, key),
            _ => return Ok(None),
        };
        let path = dir.join(format!("{key}.json"));
        if !path.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(&path).map_err(GatewayError::CacheIo)?;
        match serde_json::from_slice(&bytes) {
            Ok(response) => Ok(Some(response)),
            Err(err) => {
                tracing::warn!("ignoring unreadable cache entry {}: {err}", path.display());
                Ok(None)
            }
        }
    }

    fn cache_store(&self, key: Option<&str>, response: &ChatResponse) -> Result<(), GatewayError> {
        let (dir, key) = match (&self.cache_dir, key) {
            (Some(dir), Some(key)) => (dir, key),
            _ => return Ok(()),
        };
        std::fs::create_dir_all(dir).map_err(GatewayError::CacheIo)?;
        let path = dir.join(format!("{key}.json"));
        let bytes = serde_json::to_vec_pretty(response).expect("response serializes");
        std::fs::write(path, bytes).map_err(GatewayError::CacheIo)?;
        Ok(())
    }

    /// Backend calls issued for `role` (cache hits excluded).
    pub fn calls(&self, role: Role) -> u64 {
        self.counters.per_role[role.idx()].load(Ordering::Relaxed)
    }

    pub fn total_calls(&self) -> u64 {
        Role::ALL.iter().map(|r| self.calls(*r)).sum()
    }

    /// Calls that reached a remote backend; zero in any mock run.
    pub fn remote_calls(&self) -> u64 {
        self.counters.remote.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.counters.cache_hits.load(Ordering::Relaxed)
    }
}

#[derive(Default)]
pub struct GatewayBuilder {
    backends: HashMap<Role, Arc<dyn ChatBackend>>,
    retry: Option<RetryPolicy>,
    cache_dir: Option<PathBuf>,
    concurrency: Option<usize>,
}

impl GatewayBuilder {
    pub fn backend(mut self, role: Role, backend: Arc<dyn ChatBackend>) -> Self {
        self.backends.insert(role, backend);
        self
    }

    pub fn retry(mut self, policy: RetryPolicy) -> Self {
        self.retry = Some(policy);
        self
    }

    pub fn cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn concurrency(mut self, limit: usize) -> Self {
        self.concurrency = Some(limit.max(1));
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            backends: self.backends,
            retry: self.retry.unwrap_or_default(),
            cache_dir: self.cache_dir,
            counters: CallCounters::default(),
            semaphore: Semaphore::new(self.concurrency.unwrap_or(4)),
        }
    }
}
