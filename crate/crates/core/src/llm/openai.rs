use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatBackend, ChatRequest, LlmError, LlmSettings};

/// Chat-completions client for any OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct OpenAiBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
    model: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

impl OpenAiBackend {
    pub fn new(settings: &LlmSettings, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        OpenAiBackend {
            agent,
            endpoint: settings.endpoint.trim_end_matches('/').to_string(),
            api_key: settings.api_key.clone(),
            model: settings.model.clone(),
        }
    }

    pub fn from_env(timeout: Duration) -> Result<Self, LlmError> {
        Ok(Self::new(&LlmSettings::from_env()?, timeout))
    }

    fn url(&self) -> String {
        if self.endpoint.ends_with("/chat/completions") {
            self.endpoint.clone()
        } else {
            format!("{}/chat/completions", self.endpoint)
        }
    }
}

impl ChatBackend for OpenAiBackend {
    fn send(&mut self, req: &ChatRequest) -> Result<String, LlmError> {
        let mut messages = vec![json!({"role": "system", "content": req.system_prompt})];
        messages.extend(
            req.messages
                .iter()
                .map(|m| json!({"role": m.role, "content": m.content})),
        );
        let model = if req.model_name.is_empty() {
            &self.model
        } else {
            &req.model_name
        };
        let body = json!({
            "model": model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });

        let mut resp = self
            .agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => LlmError::Timeout,
                other => LlmError::Transport(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(LlmError::AuthFailure(status)),
            429 => return Err(LlmError::RateLimited),
            408 => return Err(LlmError::Timeout),
            500..=599 => return Err(LlmError::Server(status)),
            _ => {
                return Err(LlmError::MalformedResponse(format!(
                    "unexpected HTTP {status}"
                )))
            }
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::MalformedResponse("no message content".into()))
    }

    fn model_name(&self) -> String {
        self.model.clone()
    }
}

#[cfg(test)]
mod tests {
    use std::io::{Read, Write};
    use std::net::TcpListener;

    use super::*;

    /// Serves one canned HTTP response on a local port.
    fn serve_once(status_line: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 8192];
            let _ = stream.read(&mut buf);
            let reply = format!(
                "HTTP/1.1 {status_line}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        });
        format!("http://{addr}/v1")
    }

    fn backend(endpoint: String) -> OpenAiBackend {
        let s = LlmSettings {
            endpoint,
            api_key: "bad-key".into(),
            model: "m".into(),
        };
        OpenAiBackend::new(&s, Duration::from_secs(5))
    }

    #[test]
    fn invalid_credential_is_auth_failure() {
        let mut b = backend(serve_once("401 Unauthorized", r#"{"error":"bad key"}"#));
        let err = b.send(&ChatRequest::new("m", "s", "u")).unwrap_err();
        assert_eq!(err, LlmError::AuthFailure(401));
    }

    #[test]
    fn reads_first_choice() {
        let mut b = backend(serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#,
        ));
        assert_eq!(b.send(&ChatRequest::new("m", "s", "u")).unwrap(), "hello");
    }

    #[test]
    fn garbage_body_is_malformed() {
        let mut b = backend(serve_once("200 OK", r#"{"nope":1}"#));
        assert!(matches!(
            b.send(&ChatRequest::new("m", "s", "u")),
            Err(LlmError::MalformedResponse(_))
        ));
    }
}
