#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use failscope::classifier::ClassifierMode;
use failscope::pipeline::{parse_formats, Pipeline, RunConfig};
use failscope::provider::{
    ChatCompletionsProvider, HttpResponse, HttpTransport, ProviderConfig, ProviderError,
    StructuredClient,
};
use serde_json::Value;

pub const PINNED: &str = "2026-03-01T12:00:00Z";

pub fn pinned() -> DateTime<Utc> {
    PINNED.parse().unwrap()
}

/// HTTP transport that records every request and answers with a fixed
/// response.
#[derive(Default)]
pub struct RecordingTransport {
    pub requests: Mutex<Vec<(String, Value)>>,
    pub response: Mutex<Option<HttpResponse>>,
}

impl RecordingTransport {
    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl HttpTransport for RecordingTransport {
    fn post_json(
        &self,
        url: &str,
        _bearer_token: &str,
        body: &Value,
        _timeout: Duration,
    ) -> Result<HttpResponse, ProviderError> {
        self.requests.lock().unwrap().push((url.to_string(), body.clone()));
        self.response
            .lock()
            .unwrap()
            .clone()
            .ok_or_else(|| ProviderError::Transport("no canned response".into()))
    }
}

pub fn provider_config() -> ProviderConfig {
    ProviderConfig {
        base_url: "http://127.0.0.1:9/v1".into(),
        model_name: "test-model".into(),
        api_key_env_var: "FAILSCOPE_TEST_KEY".into(),
        timeout_seconds: 5,
        max_retries: 0,
    }
}

/// A client backed by the chat-completions provider over a recording
/// transport, so tests can count network calls.
pub fn recording_client() -> (StructuredClient, Arc<RecordingTransport>) {
    let transport = Arc::new(RecordingTransport::default());
    let provider = ChatCompletionsProvider::with_transport(provider_config(), transport.clone());
    let client = StructuredClient::new(Arc::new(provider), 0).with_sleeper(Arc::new(|_| {}));
    (client, transport)
}

pub fn run_config(out: &Path, formats: &str) -> RunConfig {
    RunConfig {
        mode: ClassifierMode::RuleBased,
        output_dir: out.to_path_buf(),
        formats: parse_formats(formats).unwrap(),
        pinned_clock: Some(pinned()),
        ..RunConfig::default()
    }
}

/// Pipeline that never finds a DOT renderer.
pub fn offline_pipeline(out: &Path, formats: &str) -> Pipeline {
    Pipeline::new(run_config(out, formats))
        .with_renderer(failscope::flowgraph::DotRenderer::with_program("/nonexistent/dot"))
}

pub fn write_corpus_dir() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    failscope::fixtures::write_corpus(&corpus).unwrap();
    (dir, corpus)
}

/// Parse errors reported by a conforming HTML5 parser.
pub fn html_errors(html: &str) -> Vec<String> {
    scraper::Html::parse_document(html)
        .errors
        .iter()
        .map(|e| e.to_string())
        .collect()
}

pub fn section_ids(html: &str) -> Vec<String> {
    let doc = scraper::Html::parse_document(html);
    let sel = scraper::Selector::parse("body > section[id]").unwrap();
    doc.select(&sel)
        .map(|s| s.value().attr("id").unwrap().to_string())
        .collect()
}

pub fn failure_highlighted_nodes(html: &str) -> usize {
    let doc = scraper::Html::parse_document(html);
    let sel = scraper::Selector::parse("#execution-flow .failure-point").unwrap();
    doc.select(&sel).count()
}

/// Runs the CLI in-process and returns (exit code, stdout, stderr).
pub fn cli(args: &[&str], overrides: &failscope::cli::Overrides) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["failscope"];
    argv.extend_from_slice(args);
    let code = failscope::cli::run(argv, overrides, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

pub fn offline_overrides() -> failscope::cli::Overrides {
    failscope::cli::Overrides {
        client: None,
        renderer: Some(failscope::flowgraph::DotRenderer::with_program("/nonexistent/dot")),
    }
}

pub fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
