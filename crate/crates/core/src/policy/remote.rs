//! Chat-completions client for a hosted vision-language model.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::{debug, warn};

use super::parse::RawModelOutput;
use crate::prompt::VlmRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    /// Per-attempt request timeout, seconds.
    pub timeout: f64,
    pub max_retries: u32,
    /// Delay before the first retry, seconds; doubles on each further retry.
    pub backoff: f64,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for PolicyEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model_name: "Qwen/Qwen2.5-VL-7B-Instruct".to_string(),
            temperature: 0.0,
            timeout: 60.0,
            max_retries: 2,
            backoff: 0.5,
            api_key: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("model unreachable after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("model request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("model endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("encoding frame: {0}")]
    Frame(String),
}

enum AttemptError {
    Transient(GatewayError),
    Fatal(GatewayError),
}

/// Blocking chat-completions client. Cheap to clone and safe to share
/// across threads; each call is an independent request.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    cfg: PolicyEndpointConfig,
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    pub fn new(cfg: PolicyEndpointConfig) -> Result<Self, GatewayError> {
        if !(cfg.timeout > 0.0 && cfg.timeout.is_finite()) {
            return Err(GatewayError::Config(format!("timeout must be > 0, got {}", cfg.timeout)));
        }
        if cfg.temperature < 0.0 {
            return Err(GatewayError::Config("temperature must be >= 0".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { cfg, http })
    }

    pub fn config(&self) -> &PolicyEndpointConfig {
        &self.cfg
    }

    pub fn endpoint_url(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    /// Request body: a system message, then a user message carrying the
    /// frames (oldest first) as base64 PNG data URLs followed by the text.
    pub fn request_body(&self, req: &VlmRequest) -> Result<Value, GatewayError> {
        let mut user_parts = Vec::with_capacity(req.images.len() + 1);
        for frame in &req.images {
            let b64 = frame
                .to_png_base64()
                .map_err(|e| GatewayError::Frame(e.to_string()))?;
            user_parts.push(json!({
                "type": "image_url",
                "image_url": { "url": format!("data:image/png;base64,{b64}") }
            }));
        }
        user_parts.push(json!({ "type": "text", "text": req.user_text }));
        let mut body = json!({
            "model": self.cfg.model_name,
            "messages": [
                { "role": "system", "content": [{ "type": "text", "text": req.system_text }] },
                { "role": "user", "content": user_parts },
            ],
            "temperature": self.cfg.temperature,
            "max_tokens": req.decode.max_tokens,
        });
        if let Some(seed) = req.decode.seed {
            body["seed"] = json!(seed);
        }
        Ok(body)
    }

    /// Sends the request, retrying transport failures, timeouts and 5xx/429
    /// answers up to `max_retries` times with exponential backoff.
    pub fn infer(&self, req: &VlmRequest) -> Result<RawModelOutput, GatewayError> {
        let body = self.request_body(req)?;
        let url = self.endpoint_url();
        let attempts = self.cfg.max_retries + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            let started = Instant::now();
            match self.attempt(&url, &body) {
                Ok(text) => {
                    return Ok(RawModelOutput {
                        text,
                        latency: started.elapsed().as_secs_f64(),
                    })
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Transient(e)) => {
                    warn!(attempt, "model request failed: {e}");
                    last = Some(e);
                }
            }
            if attempt < attempts {
                let delay = self.cfg.backoff * 2f64.powi(attempt as i32 - 1);
                std::thread::sleep(Duration::from_secs_f64(delay.max(0.0)));
            }
        }
        Err(match last {
            Some(GatewayError::Timeout { .. }) => GatewayError::Timeout { attempts },
            Some(GatewayError::Transport { message, .. }) => GatewayError::Transport { attempts, message },
            Some(e) => GatewayError::Transport {
                attempts,
                message: e.to_string(),
            },
            None => unreachable!("at least one attempt is made"),
        })
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<String, AttemptError> {
        let mut builder = self.http.post(url).json(body);
        if let Some(key) = &self.cfg.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(classify)?;
        let status = response.status();
        let text = response.text().map_err(classify)?;
        debug!(%status, bytes = text.len(), "completion response");
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AttemptError::Transient(GatewayError::Transport {
                attempts: 1,
                message: format!("HTTP {}", status.as_u16()),
            }));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(GatewayError::Status {
                status: status.as_u16(),
                body: text,
            }));
        }
        completion_text(&text).map_err(AttemptError::Fatal)
    }
}

fn classify(e: reqwest::Error) -> AttemptError {
    if e.is_timeout() {
        AttemptError::Transient(GatewayError::Timeout { attempts: 1 })
    } else {
        AttemptError::Transient(GatewayError::Transport {
            attempts: 1,
            message: e.to_string(),
        })
    }
}

/// Extracts the first choice's message text. Content may be a string or a
/// list of typed parts, in which case the text parts are concatenated.
pub fn completion_text(body: &str) -> Result<String, GatewayError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    let content = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .ok_or_else(|| GatewayError::BadResponse("no choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(GatewayError::BadResponse(format!(
            "unexpected content type: {other}"
        ))),
    }
}
