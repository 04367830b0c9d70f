//! Chat-completion clients.
//!
//! [`CompletionBackend`] is implemented by the live OpenAI-compatible client
//! ([`OpenAiClient`]) and by fixture playback ([`FixturePlayback`]).
//! [`LlmClient`] wraps either one with the response cache and the
//! in-flight request limit, so callers cannot tell them apart except
//! through [`CompletionResult::from_cache`].

mod cache;
mod fixture;
mod openai;
mod retry;

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use url::Url;

use crate::promptkit::{PromptId, PromptPayload};

pub use cache::{payload_hash, CachedRequest, ResponseCache};
pub use fixture::{mock_complete, FixturePlayback};
pub use openai::{build_request_body, OpenAiClient};
pub use retry::RetryPolicy;

pub const API_KEY_ENV: &str = "FACADE_AUDIT_API_KEY";
pub const FALLBACK_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o";

/// API key wrapper whose `Debug`/`Display` never reveal the value.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretString(String);

impl SecretString {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SecretString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretString(***)")
    }
}

impl fmt::Display for SecretString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("***")
    }
}

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub base_url: Url,
    pub model_name: String,
    pub api_key: Option<SecretString>,
    /// `None` leaves the provider default in place.
    pub temperature: Option<f64>,
    pub max_retries: u32,
    pub retry_base_delay: Duration,
    pub timeout: Duration,
    pub max_inflight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            base_url: Url::parse(DEFAULT_BASE_URL).expect("default base url parses"),
            model_name: DEFAULT_MODEL.to_string(),
            api_key: None,
            temperature: None,
            max_retries: 3,
            retry_base_delay: Duration::from_secs(1),
            timeout: Duration::from_secs(120),
            max_inflight: 4,
        }
    }
}

impl LlmConfig {
    /// Default config with the key taken from the environment.
    pub fn from_env() -> Self {
        Self {
            api_key: api_key_from_env(),
            ..Self::default()
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: self.retry_base_delay,
        }
    }
}

pub fn api_key_from_env() -> Option<SecretString> {
    [API_KEY_ENV, FALLBACK_API_KEY_ENV]
        .iter()
        .filter_map(|name| std::env::var(name).ok())
        .find(|v| !v.trim().is_empty())
        .map(SecretString::new)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    pub text: String,
    pub prompt_id: PromptId,
    pub property_id: String,
    pub token_usage: Option<TokenUsage>,
    pub from_cache: bool,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server error {status} after {attempts} attempt(s)")]
    Server { status: u16, attempts: u32 },
    #[error("request rejected with status {status}: {body}")]
    Api { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("fixture not found: {}", .0.display())]
    FixtureMissing(PathBuf),
    #[error("cannot read image {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("response cache error: {0}")]
    Cache(#[from] std::io::Error),
    #[error("invalid client configuration: {0}")]
    Config(String),
}

/// Serializable classification of an [`LlmError`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LlmErrorKind {
    AuthError,
    RateLimited,
    TransportError,
    ServerError,
    ApiError,
    MalformedResponse,
    FixtureMissing,
    ImageError,
    CacheError,
    ConfigError,
}

impl LlmError {
    pub fn kind(&self) -> LlmErrorKind {
        match self {
            LlmError::Auth(_) => LlmErrorKind::AuthError,
            LlmError::RateLimited { .. } => LlmErrorKind::RateLimited,
            LlmError::Transport { .. } => LlmErrorKind::TransportError,
            LlmError::Server { .. } => LlmErrorKind::ServerError,
            LlmError::Api { .. } => LlmErrorKind::ApiError,
            LlmError::MalformedResponse(_) => LlmErrorKind::MalformedResponse,
            LlmError::FixtureMissing(_) => LlmErrorKind::FixtureMissing,
            LlmError::Image { .. } => LlmErrorKind::ImageError,
            LlmError::Cache(_) => LlmErrorKind::CacheError,
            LlmError::Config(_) => LlmErrorKind::ConfigError,
        }
    }
}

#[async_trait]
pub trait CompletionBackend: Send + Sync {
    async fn complete(
        &self,
        payload: &PromptPayload,
        property_id: &str,
    ) -> Result<CompletionResult, LlmError>;

    /// True when responses come from fixtures rather than a provider.
    fn is_mock(&self) -> bool {
        false
    }
}

/// A backend plus response cache and in-flight limit, shareable across tasks.
pub struct LlmClient {
    backend: Arc<dyn CompletionBackend>,
    cache: Option<ResponseCache>,
    inflight: Semaphore,
    calls: AtomicUsize,
}

impl LlmClient {
    pub fn new(
        backend: Arc<dyn CompletionBackend>,
        cache: Option<ResponseCache>,
        max_inflight: usize,
    ) -> Self {
        Self {
            backend,
            cache,
            inflight: Semaphore::new(max_inflight.max(1)),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn is_mock(&self) -> bool {
        self.backend.is_mock()
    }

    /// Backend calls issued so far (cache hits excluded).
    pub fn backend_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub async fn complete(
        &self,
        payload: &PromptPayload,
        property_id: &str,
    ) -> Result<CompletionResult, LlmError> {
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(property_id, payload)? {
                return Ok(CompletionResult {
                    text,
                    prompt_id: payload.prompt_id,
                    property_id: property_id.to_string(),
                    token_usage: None,
                    from_cache: true,
                });
            }
        }
        let result = {
            let _permit = self
                .inflight
                .acquire()
                .await
                .map_err(|_| LlmError::Config("client is shutting down".into()))?;
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.backend.complete(payload, property_id).await?
        };
        if let Some(cache) = &self.cache {
            cache.put(property_id, payload, &result.text)?;
        }
        Ok(result)
    }
}
