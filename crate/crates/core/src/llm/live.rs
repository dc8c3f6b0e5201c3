use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, LlmError, Transport, TransportError, Usage};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    api_key: String,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport")
            .field("base_url", &self.base_url)
            .finish_non_exhaustive()
    }
}

impl HttpTransport {
    /// Fails with an auth error when no API key is available, before any
    /// request is made.
    pub fn new(
        base_url: Option<&str>,
        api_key: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, LlmError> {
        let api_key = api_key
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::Auth("no API key configured".into()))?
            .to_string();
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Ok(HttpTransport {
            agent: ureq::Agent::new_with_config(config),
            base_url: base_url
                .unwrap_or(DEFAULT_BASE_URL)
                .trim_end_matches('/')
                .to_string(),
            api_key,
        })
    }
}

fn map_error(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Transient {
            status: None,
            message: e.to_string(),
        },
        ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            TransportError::Transient {
                status: None,
                message: e.to_string(),
            }
        }
        other => TransportError::Fatal(other.to_string()),
    }
}

/// Pulls the reply text and token counts out of a chat-completions body.
pub(crate) fn parse_completion(body: &Value) -> Result<ChatResponse, TransportError> {
    let content = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))?;
    let tokens = |key: &str| body.pointer(&format!("/usage/{key}")).and_then(Value::as_u64);
    let usage = match (tokens("prompt_tokens"), tokens("completion_tokens")) {
        (Some(i), Some(o)) => Usage {
            input_tokens: i,
            output_tokens: o,
        },
        _ => return Err(TransportError::Malformed("missing usage token counts".into())),
    };
    Ok(ChatResponse {
        content: content.to_string(),
        usage,
    })
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut resp = self
            .agent
            .post(format!("{}/chat/completions", self.base_url))
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(map_error)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_error)?;
        match status {
            200..=299 => {
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| TransportError::Malformed(format!("invalid JSON body: {e}")))?;
                parse_completion(&v)
            }
            401 | 403 => Err(TransportError::Auth(format!("HTTP {status}"))),
            429 | 500..=599 => Err(TransportError::Transient {
                status: Some(status),
                message: text.chars().take(200).collect(),
            }),
            _ => Err(TransportError::Fatal(format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))),
        }
    }
}
