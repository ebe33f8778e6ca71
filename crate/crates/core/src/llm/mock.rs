use std::collections::VecDeque;

use super::{ChatBackend, ChatRequest, LlmError};

/// Replays scripted replies in order; once the script runs out it repeats
/// the fallback reply or reports a malformed response.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    script: VecDeque<Result<String, LlmError>>,
    fallback: Option<String>,
    requests: Vec<ChatRequest>,
}

impl MockBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::scripted(replies.into_iter().map(|r| Ok(r.into())).collect())
    }

    pub fn scripted(script: Vec<Result<String, LlmError>>) -> Self {
        MockBackend {
            script: script.into(),
            fallback: None,
            requests: Vec::new(),
        }
    }

    /// Reply used after the script is exhausted.
    pub fn with_fallback(mut self, reply: impl Into<String>) -> Self {
        self.fallback = Some(reply.into());
        self
    }

    /// Requests received so far.
    pub fn requests(&self) -> &[ChatRequest] {
        &self.requests
    }
}

impl ChatBackend for MockBackend {
    fn send(&mut self, req: &ChatRequest) -> Result<String, LlmError> {
        self.requests.push(req.clone());
        match self.script.pop_front() {
            Some(r) => r,
            None => self
                .fallback
                .clone()
                .ok_or_else(|| LlmError::MalformedResponse("mock script exhausted".into())),
        }
    }

    fn model_name(&self) -> String {
        "mock".into()
    }
}
