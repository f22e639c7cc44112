use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Provider, ProviderConfig, ProviderError, StructuredRequest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal JSON-over-HTTP POST. Swappable so tests can observe traffic.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer_token: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, ProviderError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct UreqTransport;

impl HttpTransport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer_token: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, ProviderError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut response = agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer_token}"))
            .send_json(body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Provider speaking the chat-completions wire format, forcing a single
/// function call whose parameters are the request's output schema.
pub struct ChatCompletionsProvider {
    config: ProviderConfig,
    transport: Arc<dyn HttpTransport>,
}

impl ChatCompletionsProvider {
    pub fn new(config: ProviderConfig) -> Self {
        Self::with_transport(config, Arc::new(UreqTransport))
    }

    pub fn with_transport(config: ProviderConfig, transport: Arc<dyn HttpTransport>) -> Self {
        ChatCompletionsProvider { config, transport }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    pub fn request_body(&self, request: &StructuredRequest) -> Value {
        let name = request.function_name();
        json!({
            "model": self.config.model_name,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "tools": [{
                "type": "function",
                "function": {
                    "name": name,
                    "description": request.output_schema.get("description").cloned().unwrap_or(Value::Null),
                    "parameters": request.output_schema,
                }
            }],
            "tool_choice": {"type": "function", "function": {"name": name}},
        })
    }
}

impl Provider for ChatCompletionsProvider {
    fn send(&self, request: &StructuredRequest) -> Result<Value, ProviderError> {
        let key = std::env::var(&self.config.api_key_env_var).map_err(|_| {
            ProviderError::Auth(format!(
                "environment variable {} is not set",
                self.config.api_key_env_var
            ))
        })?;
        let response = self.transport.post_json(
            &self.endpoint(),
            &key,
            &self.request_body(request),
            Duration::from_secs(self.config.timeout_seconds),
        )?;
        match response.status {
            200..=299 => parse_function_arguments(&response.body),
            401 | 403 => Err(ProviderError::Auth(format!("HTTP {}", response.status))),
            429 => Err(ProviderError::RateLimit(format!("HTTP {}", response.status))),
            408 | 500..=599 => Err(ProviderError::Transport(format!(
                "HTTP {}",
                response.status
            ))),
            other => Err(ProviderError::InvalidRequest(format!(
                "HTTP {other}: {}",
                truncate(&response.body, 200)
            ))),
        }
    }
}

fn truncate(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

/// Extracts the forced function call's arguments from a completion response.
/// A response without a tool call falls back to parsing the message content.
fn parse_function_arguments(body: &str) -> Result<Value, ProviderError> {
    let doc: Value = serde_json::from_str(body)
        .map_err(|e| ProviderError::Transport(format!("malformed response body: {e}")))?;
    let message = &doc["choices"][0]["message"];
    let raw = message["tool_calls"][0]["function"]["arguments"]
        .as_str()
        .or_else(|| message["content"].as_str())
        .ok_or_else(|| {
            ProviderError::SchemaViolation("response carries no function call arguments".into())
        })?;
    serde_json::from_str(raw).map_err(|e| {
        ProviderError::SchemaViolation(format!("function arguments are not JSON: {e}"))
    })
}
