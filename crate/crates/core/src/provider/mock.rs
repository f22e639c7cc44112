use std::collections::VecDeque;
use std::sync::Mutex;

use serde_json::Value;

use super::{Provider, ProviderError, StructuredRequest};

#[derive(Debug, Clone)]
pub enum MockResponse {
    Payload(Value),
    Fail(ProviderError),
}

/// Replays a fixed script of responses in order and records every request.
///
/// Script consumption and request recording happen under one lock, so the
/// script order holds however callers interleave.
#[derive(Debug, Default)]
pub struct MockProvider {
    state: Mutex<MockState>,
}

#[derive(Debug, Default)]
struct MockState {
    script: VecDeque<MockResponse>,
    requests: Vec<StructuredRequest>,
}

impl MockProvider {
    pub fn new(script: Vec<MockResponse>) -> Self {
        MockProvider {
            state: Mutex::new(MockState {
                script: script.into(),
                requests: Vec::new(),
            }),
        }
    }

    pub fn requests(&self) -> Vec<StructuredRequest> {
        self.state.lock().expect("mock lock").requests.clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().expect("mock lock").requests.len()
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().expect("mock lock").script.len()
    }
}

impl Provider for MockProvider {
    fn send(&self, request: &StructuredRequest) -> Result<Value, ProviderError> {
        let mut state = self.state.lock().expect("mock lock");
        state.requests.push(request.clone());
        match state.script.pop_front() {
            Some(MockResponse::Payload(p)) => Ok(p),
            Some(MockResponse::Fail(e)) => Err(e),
            None => Err(ProviderError::ScriptExhausted(state.requests.len() - 1)),
        }
    }
}
