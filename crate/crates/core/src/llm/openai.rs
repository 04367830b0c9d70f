//! Live client for OpenAI-compatible `/chat/completions` endpoints.

use std::path::Path;

use async_trait::async_trait;
use base64::Engine;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{CompletionBackend, CompletionResult, LlmConfig, LlmError, RetryPolicy, SecretString, TokenUsage};
use crate::promptkit::{ImageRef, PromptPayload};

pub struct OpenAiClient {
    http: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: SecretString,
    temperature: Option<f64>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for OpenAiClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiClient")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl OpenAiClient {
    /// Fails with [`LlmError::Auth`] when no API key is configured; nothing is sent.
    pub fn new(config: &LlmConfig) -> Result<Self, LlmError> {
        let api_key = config
            .api_key
            .clone()
            .filter(|k| !k.expose().trim().is_empty())
            .ok_or_else(|| {
                LlmError::Auth(format!(
                    "no API key: set {} (or {})",
                    super::API_KEY_ENV,
                    super::FALLBACK_API_KEY_ENV
                ))
            })?;
        if config.base_url.cannot_be_a_base() {
            return Err(LlmError::Config(format!(
                "base url {} is not absolute",
                config.base_url
            )));
        }
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: format!("{}/chat/completions", config.base_url.as_str().trim_end_matches('/')),
            model: config.model_name.clone(),
            api_key,
            temperature: config.temperature,
            retry: config.retry_policy(),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    async fn send_once(&self, body: &Value) -> Result<(StatusCode, String), reqwest::Error> {
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(self.api_key.expose())
            .json(body)
            .send()
            .await?;
        let status = response.status();
        let text = response.text().await?;
        Ok((status, text))
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    }
}

async fn image_url(image: &ImageRef) -> Result<String, LlmError> {
    match image {
        ImageRef::Url(u) => Ok(u.clone()),
        ImageRef::File(path) => {
            let bytes = tokio::fs::read(path).await.map_err(|source| LlmError::Image {
                path: path.clone(),
                source,
            })?;
            let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
            Ok(format!("data:{};base64,{encoded}", mime_for(path)))
        }
    }
}

/// Single user message: the prompt text followed by one image part per image.
pub async fn build_request_body(
    model: &str,
    temperature: Option<f64>,
    payload: &PromptPayload,
) -> Result<Value, LlmError> {
    let mut content = vec![json!({ "type": "text", "text": payload.text })];
    for image in &payload.images {
        content.push(json!({
            "type": "image_url",
            "image_url": { "url": image_url(image).await? },
        }));
    }
    let mut body = json!({
        "model": model,
        "messages": [{ "role": "user", "content": content }],
    });
    if let Some(t) = temperature {
        body["temperature"] = json!(t);
    }
    Ok(body)
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Option<Message>,
}

#[derive(Deserialize)]
struct Message {
    content: Option<Value>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
    #[serde(default)]
    total_tokens: u64,
}

fn assistant_text(body: &str) -> Result<(String, Option<TokenUsage>), LlmError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message)
        .and_then(|m| m.content);
    let text = match content {
        Some(Value::String(s)) => s,
        // some providers return content as a list of typed parts
        Some(Value::Array(parts)) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        _ => String::new(),
    };
    if text.trim().is_empty() {
        return Err(LlmError::MalformedResponse("no assistant text in reply".into()));
    }
    let usage = parsed.usage.map(|u| TokenUsage {
        prompt_tokens: u.prompt_tokens,
        completion_tokens: u.completion_tokens,
        total_tokens: u.total_tokens,
    });
    Ok((text, usage))
}

#[async_trait]
impl CompletionBackend for OpenAiClient {
    async fn complete(
        &self,
        payload: &PromptPayload,
        property_id: &str,
    ) -> Result<CompletionResult, LlmError> {
        let body = build_request_body(&self.model, self.temperature, payload).await?;
        let attempts = self.retry.max_attempts();
        let mut last_error = None;

        for attempt in 1..=attempts {
            if attempt > 1 {
                let delay = self.retry.delay(attempt - 2);
                debug!(?delay, attempt, property_id, prompt = %payload.prompt_id, "retrying");
                tokio::time::sleep(delay).await;
            }
            let error = match self.send_once(&body).await {
                Ok((status, text)) if status.is_success() => {
                    let (text, token_usage) = assistant_text(&text)?;
                    return Ok(CompletionResult {
                        text,
                        prompt_id: payload.prompt_id,
                        property_id: property_id.to_string(),
                        token_usage,
                        from_cache: false,
                    });
                }
                Ok((status, text)) => match status {
                    StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => {
                        return Err(LlmError::Auth(format!("provider returned {status}")))
                    }
                    StatusCode::TOO_MANY_REQUESTS => LlmError::RateLimited { attempts: attempt },
                    s if s.is_server_error() => LlmError::Server {
                        status: s.as_u16(),
                        attempts: attempt,
                    },
                    s => {
                        return Err(LlmError::Api {
                            status: s.as_u16(),
                            body: text.chars().take(500).collect(),
                        })
                    }
                },
                Err(e) => LlmError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                },
            };
            warn!(attempt, property_id, prompt = %payload.prompt_id, %error, "request failed");
            last_error = Some(error);
        }
        Err(last_error.expect("at least one attempt is made"))
    }
}
