//! Chat-completion-style HTTP client shared by the remote text backend
//! (persona stages) and the remote decision policy (agent).
//!
//! Requests are JSON bodies POSTed to a configurable URL. Replies may be
//! either an OpenAI-style envelope (`choices[0].message.content` holding a
//! JSON string) or the structured object itself.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Environment variable holding the bearer token for remote endpoints.
pub const TOKEN_ENV: &str = "STORESIM_API_TOKEN";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("reply did not match the expected schema: {0}")]
    Schema(String),
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Exhausted { attempts: usize, last: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    /// Maximum concurrent requests across all clients sharing a limiter.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_model() -> String {
    "default".into()
}
fn default_timeout() -> u64 {
    60_000
}
fn default_in_flight() -> usize {
    8
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: default_model(),
            timeout_ms: default_timeout(),
            max_in_flight: default_in_flight(),
        }
    }
}

/// Counting semaphore bounding requests in flight.
#[derive(Debug, Clone)]
pub struct InFlightLimiter {
    inner: Arc<(Mutex<usize>, Condvar)>,
    cap: usize,
}

pub struct Permit {
    inner: Arc<(Mutex<usize>, Condvar)>,
}

impl InFlightLimiter {
    pub fn new(cap: usize) -> Self {
        Self {
            inner: Arc::new((Mutex::new(0), Condvar::new())),
            cap: cap.max(1),
        }
    }

    pub fn acquire(&self) -> Permit {
        let (lock, cvar) = &*self.inner;
        let mut n = lock.lock().expect("limiter lock");
        while *n >= self.cap {
            n = cvar.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit {
            inner: Arc::clone(&self.inner),
        }
    }

    pub fn in_flight(&self) -> usize {
        *self.inner.0.lock().expect("limiter lock")
    }
}

impl Drop for Permit {
    fn drop(&mut self) {
        let (lock, cvar) = &*self.inner;
        let mut n = lock.lock().expect("limiter lock");
        *n -= 1;
        cvar.notify_one();
    }
}

#[derive(Clone)]
pub struct ChatClient {
    config: EndpointConfig,
    token: Option<String>,
    agent: ureq::Agent,
    limiter: InFlightLimiter,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("url", &self.config.url)
            .field("model", &self.config.model)
            .field("has_token", &self.token.is_some())
            .finish()
    }
}

impl ChatClient {
    /// Builds a client whose token comes from [`TOKEN_ENV`], if set.
    pub fn from_env(config: EndpointConfig) -> Self {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::new(config, token)
    }

    pub fn new(config: EndpointConfig, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        let limiter = InFlightLimiter::new(config.max_in_flight);
        Self {
            config,
            token,
            agent,
            limiter,
        }
    }

    pub fn with_limiter(mut self, limiter: InFlightLimiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    pub fn post(&self, body: &Value) -> Result<Value, RemoteError> {
        let _permit = self.limiter.acquire();
        let mut req = self.agent.post(&self.config.url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| RemoteError::Transport(e.to_string()))
    }

    /// Sends a chat request whose reply must be a single JSON object, and
    /// returns that object.
    pub fn structured(
        &self,
        messages: &[Value],
        schema: &Value,
    ) -> Result<Value, RemoteError> {
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": "reply", "schema": schema}
            }
        });
        let reply = self.post(&body)?;
        extract_object(&reply)
    }
}

/// Pulls the structured object out of a reply body.
pub fn extract_object(reply: &Value) -> Result<Value, RemoteError> {
    if let Some(content) = reply.pointer("/choices/0/message/content") {
        let parsed = match content {
            Value::String(s) => serde_json::from_str::<Value>(strip_fences(s))
                .map_err(|e| RemoteError::Schema(format!("content is not JSON: {e}")))?,
            other => other.clone(),
        };
        return if parsed.is_object() {
            Ok(parsed)
        } else {
            Err(RemoteError::Schema("content is not a JSON object".into()))
        };
    }
    if reply.is_object() {
        Ok(reply.clone())
    } else {
        Err(RemoteError::Schema("reply is not a JSON object".into()))
    }
}

fn strip_fences(s: &str) -> &str {
    let t = s.trim();
    let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
    t.strip_suffix("```").unwrap_or(t).trim()
}

/// A text model that answers with schema-shaped JSON objects.
pub trait TextBackend: Send + Sync {
    fn complete(&self, instruction: &str, input: &Value, schema: &Value) -> Result<Value, RemoteError>;
}

/// [`TextBackend`] over a [`ChatClient`].
#[derive(Debug, Clone)]
pub struct RemoteTextBackend {
    client: ChatClient,
}

impl RemoteTextBackend {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }
}

impl TextBackend for RemoteTextBackend {
    fn complete(&self, instruction: &str, input: &Value, schema: &Value) -> Result<Value, RemoteError> {
        let messages = [
            json!({"role": "system", "content": instruction}),
            json!({"role": "user", "content": input.to_string()}),
        ];
        self.client.structured(&messages, schema)
    }
}
