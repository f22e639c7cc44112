//! Python bindings. Structured results (features, metrics, reports) cross
//! the boundary as JSON and come back as plain Python dicts and lists.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use failscope::classifier::{classify, ClassifierMode};
use failscope::eval;
use failscope::fixtures::{self, FixtureKind, FixtureSpec};
use failscope::flowgraph::{build_graph, emit_dot};
use failscope::pipeline::{Pipeline, RunConfig};
use failscope::provider::{ChatCompletionsProvider, ProviderConfig, StructuredClient};
use failscope::report::{render_html, render_json};
use failscope::taxonomy::{self, AnnotationSource, FailureCategory};
use failscope::trace::{self, ParseMode, ScenarioConfig};

create_exception!(failscope, FailscopeError, PyException);

fn to_py_err(err: failscope::Error) -> PyErr {
    FailscopeError::new_err(format!("{}: {err}", err.code()))
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(text.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{text}`")))
}

fn parse_category(text: &str) -> PyResult<FailureCategory> {
    text.parse::<FailureCategory>()
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "ExecutionTrace", module = "failscope", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyExecutionTrace {
    inner: trace::ExecutionTrace,
}

#[pymethods]
impl PyExecutionTrace {
    /// Parse trace JSON. With `strict=False` unknown keys are ignored.
    #[staticmethod]
    #[pyo3(signature = (text, strict = true))]
    fn from_json(text: &str, strict: bool) -> PyResult<Self> {
        let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
        let parsed = trace::ExecutionTrace::from_json(text, mode).map_err(to_py_err)?;
        Ok(PyExecutionTrace { inner: parsed.trace })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn trace_id(&self) -> String {
        self.inner.trace_id.clone()
    }

    #[getter]
    fn task_description(&self) -> String {
        self.inner.task_description.clone()
    }

    #[getter]
    fn iteration_limit(&self) -> u32 {
        self.inner.scenario.iteration_limit
    }

    #[getter]
    fn message_count(&self) -> usize {
        self.inner.messages.len()
    }

    #[getter]
    fn error_count(&self) -> usize {
        self.inner.errors.len()
    }

    #[getter]
    fn status(&self) -> &'static str {
        self.inner.outcome.status.as_str()
    }

    fn is_failure(&self) -> bool {
        self.inner.is_failure()
    }

    /// Violations as `(code, path, detail)` tuples; empty means valid.
    fn validate(&self) -> Vec<(String, String, String)> {
        validate(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "ExecutionTrace(trace_id={:?}, messages={}, status={})",
            self.inner.trace_id,
            self.inner.messages.len(),
            self.inner.outcome.status.as_str()
        )
    }
}

fn validate(t: &trace::ExecutionTrace) -> Vec<(String, String, String)> {
    trace::validate_trace(t)
        .into_iter()
        .map(|v| (v.code.as_str().to_string(), v.path, v.detail))
        .collect()
}

#[pyclass(name = "Annotation", module = "failscope", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyAnnotation {
    inner: taxonomy::Annotation,
}

#[pymethods]
impl PyAnnotation {
    #[new]
    #[pyo3(signature = (category, confidence, reasoning, source = "human"))]
    fn new(category: &str, confidence: f64, reasoning: &str, source: &str) -> PyResult<Self> {
        let source: AnnotationSource = parse_enum("source", source)?;
        let inner = taxonomy::Annotation::new(parse_category(category)?, confidence, reasoning, source)
            .map_err(to_py_err)?;
        Ok(PyAnnotation { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyAnnotation { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("annotation serializes")
    }

    #[getter]
    fn category(&self) -> &'static str {
        self.inner.category.as_str()
    }

    #[getter]
    fn subcategory(&self) -> &'static str {
        self.inner.subcategory.label
    }

    #[getter]
    fn confidence(&self) -> f64 {
        self.inner.confidence
    }

    #[getter]
    fn reasoning(&self) -> String {
        self.inner.reasoning.clone()
    }

    #[getter]
    fn needs_review(&self) -> bool {
        self.inner.needs_review
    }

    #[getter]
    fn source(&self) -> &'static str {
        self.inner.source.as_str()
    }

    fn __repr__(&self) -> String {
        format!(
            "Annotation(category={:?}, confidence={}, needs_review={})",
            self.inner.category.as_str(),
            self.inner.confidence,
            self.inner.needs_review
        )
    }
}

#[pyfunction]
#[pyo3(signature = (text, strict = true))]
fn parse_trace(text: &str, strict: bool) -> PyResult<PyExecutionTrace> {
    PyExecutionTrace::from_json(text, strict)
}

#[pyfunction]
fn validate_trace(trace: &PyExecutionTrace) -> Vec<(String, String, String)> {
    validate(&trace.inner)
}

#[pyfunction]
fn extract_features(py: Python<'_>, trace: &PyExecutionTrace) -> PyResult<Py<PyAny>> {
    let f = failscope::features::extract_features(&trace.inner).map_err(to_py_err)?;
    json_to_py(py, &serde_json::to_value(f).expect("features serialize"))
}

fn client_from_config(text: Option<&str>) -> PyResult<Option<StructuredClient>> {
    let Some(text) = text else { return Ok(None) };
    let config = ProviderConfig::from_json(text).map_err(|e| to_py_err(e.into()))?;
    let provider = Arc::new(ChatCompletionsProvider::new(config.clone()));
    Ok(Some(StructuredClient::from_config(&config, provider)))
}

/// Classify a failed trace. `provider_config` is provider JSON; the key is
/// read from the environment variable it names.
#[pyfunction]
#[pyo3(signature = (trace, mode = "rule_based", provider_config = None))]
fn classify_trace(
    py: Python<'_>,
    trace: &PyExecutionTrace,
    mode: &str,
    provider_config: Option<&str>,
) -> PyResult<PyAnnotation> {
    let mode: ClassifierMode = mode.parse().map_err(PyValueError::new_err)?;
    let client = client_from_config(provider_config)?;
    let inner = trace.inner.clone();
    let result = py.detach(move || classify(&inner, mode, client.as_ref()));
    Ok(PyAnnotation {
        inner: result.map_err(to_py_err)?.annotation,
    })
}

#[pyfunction]
#[pyo3(signature = (trace, annotation = None))]
fn build_dot(trace: &PyExecutionTrace, annotation: Option<&PyAnnotation>) -> PyResult<String> {
    let graph = build_graph(&trace.inner, annotation.map(|a| &a.inner)).map_err(to_py_err)?;
    Ok(emit_dot(&graph))
}

/// Full rule-based analysis. Returns a dict with `json`, `html`, and `dot`
/// report texts. `generated_at` (RFC 3339) pins the report timestamp.
#[pyfunction]
#[pyo3(signature = (trace, generated_at = None))]
fn analyze(trace: &PyExecutionTrace, generated_at: Option<&str>) -> PyResult<BTreeMap<String, String>> {
    let pinned = generated_at
        .map(|t| t.parse::<DateTime<Utc>>())
        .transpose()
        .map_err(|e| PyValueError::new_err(format!("generated_at: {e}")))?;
    let pipeline = Pipeline::new(RunConfig {
        pinned_clock: pinned,
        ..RunConfig::default()
    });
    let analysis = pipeline.analyze(trace.inner.clone()).map_err(to_py_err)?;
    let bundle = &analysis.bundle;
    Ok(BTreeMap::from([
        ("json".to_string(), render_json(bundle)),
        ("html".to_string(), render_html(bundle, None)),
        ("dot".to_string(), emit_dot(&bundle.graph)),
    ]))
}

#[pyfunction]
fn cohen_kappa(pairs: Vec<(String, String)>) -> PyResult<f64> {
    eval::cohen_kappa(&pairs).map_err(to_py_err)
}

/// Fraction of predictions whose category equals the gold category.
#[pyfunction]
fn accuracy(predictions: Vec<PyRef<'_, PyAnnotation>>, gold: Vec<String>) -> PyResult<f64> {
    if predictions.len() != gold.len() {
        return Err(PyValueError::new_err("predictions and gold differ in length"));
    }
    let pairs = predictions
        .iter()
        .zip(&gold)
        .map(|(p, g)| Ok((p.inner.clone(), parse_category(g)?)))
        .collect::<PyResult<Vec<_>>>()?;
    eval::accuracy(&pairs).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (predictions_path, gold_path, threshold = eval::DEFAULT_THRESHOLD))]
fn evaluate(py: Python<'_>, predictions_path: &str, gold_path: &str, threshold: f64) -> PyResult<Py<PyAny>> {
    let m = eval::evaluate(predictions_path.as_ref(), gold_path.as_ref(), threshold).map_err(to_py_err)?;
    json_to_py(py, &serde_json::to_value(m).expect("metrics serialize"))
}

/// `kind` is a category id or `"success"`.
#[pyfunction]
#[pyo3(signature = (kind, iteration_limit, seed, prompt_quality = "basic", tool_availability = "full", task_difficulty = "medium"))]
fn generate_trace(
    kind: &str,
    iteration_limit: u32,
    seed: u64,
    prompt_quality: &str,
    tool_availability: &str,
    task_difficulty: &str,
) -> PyResult<PyExecutionTrace> {
    let kind: FixtureKind = parse_enum("fixture kind", kind)?;
    let spec = FixtureSpec {
        kind,
        scenario: ScenarioConfig {
            iteration_limit,
            prompt_quality: parse_enum("prompt quality", prompt_quality)?,
            tool_availability: parse_enum("tool availability", tool_availability)?,
            task_difficulty: parse_enum("task difficulty", task_difficulty)?,
        },
        seed,
    };
    Ok(PyExecutionTrace {
        inner: fixtures::generate_trace(&spec),
    })
}

/// The 32 labeled traces as `(trace, gold_category)` pairs.
#[pyfunction]
fn reference_corpus() -> Vec<(PyExecutionTrace, &'static str)> {
    fixtures::generate_reference_corpus()
        .into_iter()
        .map(|c| (PyExecutionTrace { inner: c.trace }, c.gold.category.as_str()))
        .collect()
}

#[pyfunction]
fn write_corpus(dir: &str) -> PyResult<usize> {
    fixtures::write_corpus(dir.as_ref())
        .map(|c| c.len())
        .map_err(to_py_err)
}

#[pyfunction]
fn categories() -> Vec<&'static str> {
    FailureCategory::ALL.iter().map(|c| c.as_str()).collect()
}

#[pyfunction]
fn subcategories_of(category: &str) -> PyResult<Vec<&'static str>> {
    Ok(taxonomy::subcategories_of(parse_category(category)?)
        .iter()
        .map(|s| s.label)
        .collect())
}

/// Counts per category id plus `"total"`.
#[pyfunction]
fn summarize_distribution(annotations: Vec<PyRef<'_, PyAnnotation>>) -> BTreeMap<String, usize> {
    let inner: Vec<_> = annotations.iter().map(|a| a.inner.clone()).collect();
    let dist = taxonomy::summarize_distribution(&inner);
    let mut out: BTreeMap<String, usize> = FailureCategory::ALL
        .iter()
        .map(|c| (c.as_str().to_string(), dist.count_of(*c)))
        .collect();
    out.insert("total".into(), dist.total);
    out
}

#[pymodule]
#[pyo3(name = "failscope")]
pub fn failscope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FailscopeError", m.py().get_type::<FailscopeError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("REVIEW_THRESHOLD", taxonomy::REVIEW_THRESHOLD)?;
    m.add_class::<PyExecutionTrace>()?;
    m.add_class::<PyAnnotation>()?;
    m.add_function(wrap_pyfunction!(parse_trace, m)?)?;
    m.add_function(wrap_pyfunction!(validate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(classify_trace, m)?)?;
    m.add_function(wrap_pyfunction!(build_dot, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(cohen_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(reference_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(write_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(categories, m)?)?;
    m.add_function(wrap_pyfunction!(subcategories_of, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_distribution, m)?)?;
    Ok(())
}
