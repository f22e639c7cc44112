//! End-to-end analysis: validate, extract features, classify, explain,
//! recommend, build the graph, and write reports. Also the batch runner.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify_with, ClassifierMode};
use crate::error::Error;
use crate::explainer::explain;
use crate::features::{extract_features_with, FeatureConfig};
use crate::flowgraph::{build_graph, emit_dot, DotRenderer, ImageFormat};
use crate::provider::{ChatCompletionsProvider, ProviderConfig, StructuredClient};
use crate::recommender::recommend;
use crate::report::{render_html, render_json, AnalysisBundle};
use crate::taxonomy::FailureCategory;
use crate::trace::{validate_trace, ExecutionTrace, ParseMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Html,
    Json,
    Dot,
    Svg,
    Png,
}

impl OutputFormat {
    pub const ALL: [OutputFormat; 5] = [
        OutputFormat::Html,
        OutputFormat::Json,
        OutputFormat::Dot,
        OutputFormat::Svg,
        OutputFormat::Png,
    ];

    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Html => "html",
            OutputFormat::Json => "json",
            OutputFormat::Dot => "dot",
            OutputFormat::Svg => "svg",
            OutputFormat::Png => "png",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        OutputFormat::ALL
            .into_iter()
            .find(|f| f.extension() == s)
            .ok_or_else(|| format!("unknown format `{s}` (expected html, json, dot, svg, png)"))
    }
}

pub fn parse_formats(csv: &str) -> Result<BTreeSet<OutputFormat>, String> {
    let formats = csv
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<BTreeSet<_>, _>>()?;
    if formats.is_empty() {
        return Err("at least one output format is required".into());
    }
    Ok(formats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: ClassifierMode,
    pub provider: Option<ProviderConfig>,
    pub output_dir: PathBuf,
    pub formats: BTreeSet<OutputFormat>,
    pub strict_parsing: bool,
    pub pinned_clock: Option<DateTime<Utc>>,
    /// Concurrent traces in batch mode; `None` uses every available core.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: ClassifierMode::RuleBased,
            provider: None,
            output_dir: PathBuf::from("."),
            formats: BTreeSet::from([OutputFormat::Html, OutputFormat::Json]),
            strict_parsing: true,
            pinned_clock: None,
            jobs: None,
        }
    }
}

/// A configured pipeline: run settings plus the provider client and the DOT
/// renderer, both replaceable for testing.
#[derive(Clone)]
pub struct Pipeline {
    pub config: RunConfig,
    client: Option<StructuredClient>,
    renderer: DotRenderer,
    feature_config: FeatureConfig,
}

impl Pipeline {
    /// Builds the HTTP client from `config.provider` when one is given.
    pub fn new(config: RunConfig) -> Self {
        let client = config.provider.as_ref().map(|p| {
            StructuredClient::from_config(p, Arc::new(ChatCompletionsProvider::new(p.clone())))
        });
        Pipeline {
            config,
            client,
            renderer: DotRenderer::default(),
            feature_config: FeatureConfig::default(),
        }
    }

    pub fn with_client(mut self, client: Option<StructuredClient>) -> Self {
        self.client = client;
        self
    }

    pub fn with_renderer(mut self, renderer: DotRenderer) -> Self {
        self.renderer = renderer;
        self
    }

    pub fn with_feature_config(mut self, feature_config: FeatureConfig) -> Self {
        self.feature_config = feature_config;
        self
    }

    /// The client used for LLM calls; never consulted in rule-based mode.
    fn active_client(&self) -> Option<&StructuredClient> {
        match self.config.mode {
            ClassifierMode::RuleBased => None,
            _ => self.client.as_ref(),
        }
    }

    fn parse_mode(&self) -> ParseMode {
        if self.config.strict_parsing {
            ParseMode::Strict
        } else {
            ParseMode::Lenient
        }
    }

    pub fn load_trace(&self, path: &Path) -> Result<ExecutionTrace, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = ExecutionTrace::from_json(&text, self.parse_mode())
            .map_err(|e| match e {
                Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
                other => other,
            })?;
        Ok(parsed.trace)
    }

    fn tool_versions(&self) -> BTreeMap<String, String> {
        let mut versions = BTreeMap::from([(
            env!("CARGO_PKG_NAME").to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        )]);
        if let (Some(_), Some(p)) = (self.active_client(), &self.config.provider) {
            versions.insert("llm_model".into(), p.model_name.clone());
        }
        versions
    }

    /// Runs the analysis stages on one trace. Successful runs get a graph but
    /// no annotation, explanation, or recommendations.
    pub fn analyze(&self, trace: ExecutionTrace) -> Result<Analysis, Error> {
        let violations = validate_trace(&trace);
        if !violations.is_empty() {
            return Err(Error::InvalidTrace(violations));
        }
        let mut warnings = Vec::new();
        let (features, annotation, explanation, recommendations) = if trace.is_failure() {
            let c = classify_with(
                &trace,
                self.config.mode,
                self.active_client(),
                &self.feature_config,
            )?;
            warnings.extend(c.warnings);
            let explanation = explain(&trace, &c.features, &c.annotation, self.active_client());
            if let Some(reason) = &explanation.fallback_reason {
                warnings.push(format!("explanation fell back to template: {reason}"));
            }
            let recs = recommend(&c.annotation, &c.features, &trace.scenario);
            (c.features, Some(c.annotation), Some(explanation), recs)
        } else {
            let features = extract_features_with(&trace, &self.feature_config)?;
            (features, None, None, Vec::new())
        };
        let graph = build_graph(&trace, annotation.as_ref())?;
        let bundle = AnalysisBundle {
            trace,
            features,
            annotation,
            explanation,
            recommendations,
            graph,
            tool_versions: self.tool_versions(),
            generated_at: self.config.pinned_clock.unwrap_or_else(Utc::now),
        };
        Ok(Analysis { bundle, warnings })
    }

    /// Renders the requested formats into memory. An unavailable renderer
    /// only drops the svg/png outputs; HTML falls back to the DOT source.
    pub fn render(&self, bundle: &AnalysisBundle) -> Result<RenderedOutputs, Error> {
        let formats = &self.config.formats;
        let mut files = BTreeMap::new();
        let mut warnings = Vec::new();
        let dot = emit_dot(&bundle.graph);

        let want_svg = formats.contains(&OutputFormat::Svg) || formats.contains(&OutputFormat::Html);
        let svg = if want_svg && self.renderer.is_available() {
            Some(self.renderer.render_dot(&dot, ImageFormat::Svg)?)
        } else {
            None
        };
        if (formats.contains(&OutputFormat::Svg) || formats.contains(&OutputFormat::Png))
            && !self.renderer.is_available()
        {
            warnings.push(format!(
                "{}; svg/png outputs skipped",
                Error::RendererNotFound("dot".into())
            ));
        }

        for format in formats {
            let bytes = match format {
                OutputFormat::Html => render_html(bundle, svg.as_deref()).into_bytes(),
                OutputFormat::Json => render_json(bundle).into_bytes(),
                OutputFormat::Dot => dot.clone().into_bytes(),
                OutputFormat::Svg => match &svg {
                    Some(s) => s.clone(),
                    None => continue,
                },
                OutputFormat::Png => {
                    if !self.renderer.is_available() {
                        continue;
                    }
                    self.renderer.render_dot(&dot, ImageFormat::Png)?
                }
            };
            files.insert(*format, bytes);
        }
        Ok(RenderedOutputs { files, warnings })
    }

    /// Writes rendered outputs as `{stem}.{ext}` under the output directory
    /// and returns the written paths.
    pub fn write_outputs(
        &self,
        stem: &str,
        outputs: &RenderedOutputs,
    ) -> Result<BTreeMap<OutputFormat, PathBuf>, Error> {
        let dir = &self.config.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = BTreeMap::new();
        for (format, bytes) in &outputs.files {
            let path = dir.join(format!("{stem}.{}", format.extension()));
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.insert(*format, path);
        }
        Ok(written)
    }

    /// Load, analyze, render, and write one trace file.
    pub fn analyze_file(&self, path: &Path) -> Result<FileResult, Error> {
        let trace = self.load_trace(path)?;
        let analysis = self.analyze(trace)?;
        let rendered = self.render(&analysis.bundle)?;
        let stem = file_stem_for(&analysis.bundle.trace.trace_id);
        let written = self.write_outputs(&stem, &rendered)?;
        let mut warnings = analysis.warnings;
        warnings.extend(rendered.warnings);
        Ok(FileResult {
            bundle: analysis.bundle,
            written,
            warnings,
        })
    }

    /// Analyzes every trace under `dir` (or `dir/traces` when present),
    /// writing one report set per trace and `index.json`. Per-trace failures
    /// are recorded in the index and do not stop the batch.
    pub fn run_batch(&self, dir: &Path) -> Result<BatchIndex, Error> {
        let files = find_trace_files(dir)?;
        let run = || -> Vec<IndexRow> {
            files.par_iter().map(|path| self.batch_row(path)).collect()
        };
        let mut rows = match self.config.jobs {
            Some(jobs) => rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::Parse(format!("thread pool: {e}")))?
                .install(run),
            None => run(),
        };
        rows.sort_by(|a, b| (&a.trace_id, &a.source).cmp(&(&b.trace_id, &b.source)));
        let index = BatchIndex { rows };
        let out = &self.config.output_dir;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join("index.json");
        let mut text = serde_json::to_string_pretty(&index).expect("index serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(index)
    }

    fn batch_row(&self, path: &Path) -> IndexRow {
        let source = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match self.analyze_file(path) {
            Ok(result) => {
                for w in &result.warnings {
                    log::warn!("{}: {w}", result.bundle.trace.trace_id);
                }
                let a = result.bundle.annotation.as_ref();
                IndexRow {
                    trace_id: result.bundle.trace.trace_id.clone(),
                    source,
                    status: result.bundle.trace.outcome.status.as_str().into(),
                    category: a.map(|a| a.category),
                    confidence: a.map(|a| a.confidence),
                    needs_review: a.map(|a| a.needs_review),
                    reports: result
                        .written
                        .iter()
                        .map(|(f, p)| (*f, relative_name(p)))
                        .collect(),
                    error: None,
                }
            }
            Err(err) => {
                log::error!("{}: {err}", path.display());
                let trace_id = std::fs::read_to_string(path)
                    .ok()
                    .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
                    .and_then(|v| v.get("trace_id").and_then(|id| id.as_str()).map(String::from))
                    .unwrap_or_else(|| {
                        path.file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_default()
                    });
                IndexRow {
                    trace_id,
                    source,
                    status: "error".into(),
                    category: None,
                    confidence: None,
                    needs_review: None,
                    reports: BTreeMap::new(),
                    error: Some(RowError {
                        code: err.code().into(),
                        message: err.to_string(),
                    }),
                }
            }
        }
    }
}

fn relative_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Maps a trace id to a safe file name stem.
pub fn file_stem_for(trace_id: &str) -> String {
    let stem: String = trace_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    match stem.trim_start_matches('.') {
        "" => "trace".into(),
        s => s.into(),
    }
}

/// `*.json` files directly in `dir`, or in `dir/traces` if that exists.
pub fn find_trace_files(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let nested = dir.join("traces");
    let dir = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::NoTraces(dir));
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub bundle: AnalysisBundle,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RenderedOutputs {
    pub files: BTreeMap<OutputFormat, Vec<u8>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FileResult {
    pub bundle: AnalysisBundle,
    pub written: BTreeMap<OutputFormat, PathBuf>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub trace_id: String,
    /// Input file name within the batch directory.
    pub source: String,
    pub status: String,
    pub category: Option<FailureCategory>,
    pub confidence: Option<f64>,
    pub needs_review: Option<bool>,
    /// Report file names relative to the output directory, by format.
    pub reports: BTreeMap<OutputFormat, String>,
    pub error: Option<RowError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchIndex {
    pub rows: Vec<IndexRow>,
}

impl BatchIndex {
    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}
