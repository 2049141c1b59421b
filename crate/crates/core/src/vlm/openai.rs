//! Chat-completions transport over blocking HTTP.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::chat::{ChatRequest, ChatTransport, TransportError};
use super::limiter::RateLimiter;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const ENDPOINT_ENV: &str = "TPIVOT_VLM_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub max_concurrency: usize,
    pub requests_per_minute: Option<usize>,
    pub jpeg_quality: u8,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string()),
            model: "gpt-4o".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout_s: 60.0,
            max_retries: 2,
            max_concurrency: 4,
            requests_per_minute: Some(60),
            jpeg_quality: 90,
        }
    }
}

/// Request body: one user message whose content is the text block followed
/// by the images in badge order. Sampling temperature is fixed at 0.
pub fn build_chat_body(model: &str, req: &ChatRequest) -> Value {
    let mut content = vec![json!({"type": "text", "text": req.text})];
    content.extend(
        req.images
            .iter()
            .map(|img| json!({"type": "image_url", "image_url": {"url": img.data_url()}})),
    );
    json!({
        "model": model,
        "temperature": 0,
        "messages": [{"role": "user", "content": content}],
    })
}

/// Pulls `choices[0].message.content`, accepting either a plain string or a
/// list of text parts.
pub fn extract_reply_text(body: &Value) -> Option<String> {
    let content = body.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let text: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            (!text.is_empty()).then(|| text.join(""))
        }
        _ => None,
    }
}

pub struct OpenAiTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    limiter: RateLimiter,
}

impl OpenAiTransport {
    /// Reads the API key from the configured environment variable. A missing
    /// key is allowed for local servers that do not check it.
    pub fn new(config: &HttpConfig) -> Result<Self, TransportError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: &HttpConfig, api_key: Option<String>) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s.max(0.001)))
            .build()
            .map_err(|e| TransportError::Http(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            api_key,
            limiter: RateLimiter::new(config.max_concurrency, config.requests_per_minute),
        })
    }
}

impl ChatTransport for OpenAiTransport {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let body = build_chat_body(&self.model, req);
        let _permit = self.limiter.acquire();
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call
            .send()
            .map_err(|e| TransportError::Http(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| TransportError::Http(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| TransportError::BadResponse(e.to_string()))?;
        extract_reply_text(&value).ok_or(TransportError::BadResponse(text))
    }
}
