use serde::Deserialize;

use super::{BackendConfig, BackendFailure, ChatBackend, ChatRequest};
use crate::{Error, Result};

/// Blocking client for OpenAI-compatible `chat/completions` endpoints.
pub struct OpenAiBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl OpenAiBackend {
    /// Resolves the credential from the configured environment variable.
    pub fn from_config(config: &BackendConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable `{var}` with the API key is not set"))
            })?),
            None => None,
        };
        Ok(Self::new(config, api_key))
    }

    pub fn new(config: &BackendConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        OpenAiBackend {
            agent,
            endpoint: config.endpoint.clone(),
            api_key,
        }
    }
}

pub(crate) fn parse_completion(body: &str) -> std::result::Result<String, BackendFailure> {
    let parsed: CompletionBody = serde_json::from_str(body)
        .map_err(|e| BackendFailure::Protocol(format!("malformed completion body: {e}")))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendFailure::Protocol("completion has no choices".into()))?;
    Ok(choice.message.content.unwrap_or_default())
}

impl ChatBackend for OpenAiBackend {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, BackendFailure> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = call.send_json(request).map_err(|e| BackendFailure::Retryable {
            status: None,
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendFailure::Retryable {
                status: Some(status),
                message: e.to_string(),
            })?;
        match status {
            200..=299 => parse_completion(&body),
            429 | 500..=599 => Err(BackendFailure::Retryable {
                status: Some(status),
                message: body,
            }),
            _ => Err(BackendFailure::Fatal {
                status: Some(status),
                message: body,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_first_choice() {
        let body = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"Hallo"}},{"index":1,"message":{"role":"assistant","content":"no"}}]}"#;
        assert_eq!(parse_completion(body).unwrap(), "Hallo");
    }

    #[test]
    fn malformed_bodies_are_protocol_errors() {
        assert!(matches!(parse_completion("not json"), Err(BackendFailure::Protocol(_))));
        assert!(matches!(parse_completion(r#"{"choices":[]}"#), Err(BackendFailure::Protocol(_))));
    }

    #[test]
    fn null_content_is_empty() {
        assert_eq!(
            parse_completion(r#"{"choices":[{"message":{"content":null}}]}"#).unwrap(),
            ""
        );
    }

    #[test]
    fn request_wire_shape() {
        let req = ChatRequest::single_turn(&BackendConfig::default(), "hi");
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["model"], "gpt-3.5-turbo");
        assert_eq!(v["messages"][0]["role"], "user");
        assert_eq!(v["messages"][0]["content"], "hi");
        assert_eq!(v["temperature"], 1.0);
        assert_eq!(v["max_tokens"], 512);
    }

    #[test]
    fn missing_credential_is_config_error() {
        let cfg = BackendConfig {
            api_key_env: Some("ITREF_TEST_SURELY_UNSET_KEY".into()),
            ..BackendConfig::default()
        };
        assert!(matches!(OpenAiBackend::from_config(&cfg), Err(Error::Config(_))));
    }
}
