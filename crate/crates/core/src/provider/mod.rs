//! Structured-output chat completion clients.
//!
//! A [`Provider`] performs exactly one attempt; [`StructuredClient`] layers the
//! retry policy and schema validation on top of any provider.

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

mod http;
mod mock;

pub use http::{ChatCompletionsProvider, HttpResponse, HttpTransport, UreqTransport};
pub use mock::{MockProvider, MockResponse};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimit(String),
    #[error("response violates the output schema: {0}")]
    SchemaViolation(String),
    #[error("mock provider script exhausted after {0} call(s)")]
    ScriptExhausted(usize),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ProviderError {
    pub fn code(&self) -> &'static str {
        match self {
            ProviderError::Transport(_) => "TRANSPORT",
            ProviderError::Auth(_) => "AUTH",
            ProviderError::RateLimit(_) => "RATE_LIMIT",
            ProviderError::SchemaViolation(_) => "SCHEMA_VIOLATION",
            ProviderError::ScriptExhausted(_) => "SCRIPT_EXHAUSTED",
            ProviderError::InvalidRequest(_) => "INVALID_REQUEST",
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimit(_))
    }
}

/// Connection settings for a chat-completions endpoint. The API key itself is
/// never stored here, only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_key_var")]
    pub api_key_env_var: String,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_key_var() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

impl ProviderConfig {
    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let config: ProviderConfig = serde_json::from_str(text)
            .map_err(|e| ProviderError::InvalidRequest(format!("provider config: {e}")))?;
        if config.timeout_seconds == 0 {
            return Err(ProviderError::InvalidRequest(
                "timeout_seconds must be positive".into(),
            ));
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuredRequest {
    pub system_text: String,
    pub user_text: String,
    pub output_schema: Value,
    pub temperature: f64,
}

impl StructuredRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>, schema: Value) -> Self {
        StructuredRequest {
            system_text: system_text.into(),
            user_text: user_text.into(),
            output_schema: schema,
            temperature: 0.0,
        }
    }

    /// Name of the function the model is forced to call; taken from the
    /// schema title.
    pub fn function_name(&self) -> &str {
        self.output_schema
            .get("title")
            .and_then(Value::as_str)
            .unwrap_or("structured_output")
    }

    pub fn check(&self) -> Result<(), ProviderError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        jsonschema::validator_for(&self.output_schema)
            .map(|_| ())
            .map_err(|e| ProviderError::InvalidRequest(format!("output schema: {e}")))
    }

    pub fn char_count(&self) -> usize {
        self.system_text.chars().count() + self.user_text.chars().count()
    }
}

/// A single structured-completion attempt against some backend.
pub trait Provider: Send + Sync {
    fn send(&self, request: &StructuredRequest) -> Result<Value, ProviderError>;
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Retries, backoff, and payload validation around a [`Provider`].
#[derive(Clone)]
pub struct StructuredClient {
    provider: Arc<dyn Provider>,
    max_retries: u32,
    initial_backoff: Duration,
    sleeper: Sleeper,
}

impl StructuredClient {
    pub fn new(provider: Arc<dyn Provider>, max_retries: u32) -> Self {
        StructuredClient {
            provider,
            max_retries,
            initial_backoff: Duration::from_secs(1),
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    pub fn from_config(config: &ProviderConfig, provider: Arc<dyn Provider>) -> Self {
        Self::new(provider, config.max_retries)
    }

    /// Replaces the sleep function, e.g. to observe backoff without waiting.
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn max_retries(&self) -> u32 {
        self.max_retries
    }

    /// Backoff before retry number `retry` (0-based), without jitter.
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff.saturating_mul(1u32 << retry.min(16))
    }

    pub fn complete_structured(&self, request: &StructuredRequest) -> Result<Value, ProviderError> {
        request.check()?;
        let mut retries = 0;
        let payload = loop {
            match self.provider.send(request) {
                Ok(payload) => break payload,
                Err(err) if err.is_retryable() && retries < self.max_retries => {
                    let base = self.backoff(retries);
                    let jitter = base.mul_f64(rand::rng().random_range(0.0..0.25));
                    log::warn!(
                        "{err}; retry {} of {} in {:?}",
                        retries + 1,
                        self.max_retries,
                        base + jitter
                    );
                    (self.sleeper)(base + jitter);
                    retries += 1;
                }
                Err(err) => return Err(err),
            }
        };
        log::debug!(
            "structured call: {} request chars, {} response chars",
            request.char_count(),
            payload.to_string().chars().count()
        );
        validate_payload(&request.output_schema, &payload)?;
        Ok(payload)
    }
}

pub fn validate_payload(schema: &Value, payload: &Value) -> Result<(), ProviderError> {
    let validator = jsonschema::validator_for(schema)
        .map_err(|e| ProviderError::InvalidRequest(format!("output schema: {e}")))?;
    let problems: Vec<String> = validator
        .iter_errors(payload)
        .map(|e| {
            let path = e.instance_path.to_string();
            if path.is_empty() {
                e.to_string()
            } else {
                format!("{path}: {e}")
            }
        })
        .collect();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(ProviderError::SchemaViolation(problems.join("; ")))
    }
}
