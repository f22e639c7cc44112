//! HTML and JSON reports for one analyzed trace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use base64::Engine as _;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::explainer::Explanation;
use crate::features::FeatureVector;
use crate::flowgraph::{emit_dot, FlowGraph};
use crate::recommender::{Recommendation, Tier};
use crate::taxonomy::Annotation;
use crate::trace::ExecutionTrace;

pub const REPORT_SCHEMA_VERSION: &str = "1.0";

/// Section anchors of a failure report, in document order.
pub const SECTION_IDS: [&str; 8] = [
    "summary",
    "execution-flow",
    "root-cause",
    "failure-mechanism",
    "context",
    "counterfactual",
    "recommendations",
    "trace-appendix",
];

pub const REVIEW_BADGE_CLASS: &str = "badge-review";
/// Attribute present on the summary badge exactly when review is needed.
pub const REVIEW_MARKER: &str = "data-needs-review=\"true\"";
pub const NO_FAILURE_TEXT: &str = "no failure to classify";
pub const RENDERER_MISSING_NOTICE: &str =
    "Graph renderer not available; showing the DOT source instead.";

/// Everything produced for one trace. `annotation` and `explanation` are
/// absent for successful runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisBundle {
    pub trace: ExecutionTrace,
    pub features: FeatureVector,
    pub annotation: Option<Annotation>,
    pub explanation: Option<Explanation>,
    pub recommendations: Vec<Recommendation>,
    pub graph: FlowGraph,
    pub tool_versions: BTreeMap<String, String>,
    pub generated_at: DateTime<Utc>,
}

/// The JSON report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub schema_version: String,
    pub trace_id: String,
    pub features: FeatureVector,
    pub annotation: Option<Annotation>,
    pub explanation: Option<Explanation>,
    pub recommendations: Vec<Recommendation>,
    pub graph: FlowGraph,
    pub generated_at: String,
    pub tool_versions: BTreeMap<String, String>,
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

impl AnalysisBundle {
    pub fn document(&self) -> ReportDocument {
        ReportDocument {
            schema_version: REPORT_SCHEMA_VERSION.into(),
            trace_id: self.trace.trace_id.clone(),
            features: self.features.clone(),
            annotation: self.annotation.clone(),
            explanation: self.explanation.clone(),
            recommendations: self.recommendations.clone(),
            graph: self.graph.clone(),
            generated_at: format_timestamp(&self.generated_at),
            tool_versions: self.tool_versions.clone(),
        }
    }
}

/// Serializes with keys sorted at every level, so parsing the output and
/// rendering it again gives the same bytes.
pub fn render_document(doc: &ReportDocument) -> String {
    let value = serde_json::to_value(doc).expect("report document serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("JSON value serializes");
    text.push('\n');
    text
}

pub fn render_json(bundle: &AnalysisBundle) -> String {
    render_document(&bundle.document())
}

pub fn parse_report_json(text: &str) -> Result<ReportDocument, crate::Error> {
    serde_json::from_str(text).map_err(|e| crate::Error::Parse(format!("report JSON: {e}")))
}

pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

const STYLE: &str = "\
body{font-family:system-ui,-apple-system,'Segoe UI',sans-serif;max-width:960px;margin:2em auto;padding:0 1em;color:#1d1d1f;line-height:1.5}
section{margin:1.5em 0;padding:1em 1.2em;border:1px solid #ddd;border-radius:6px}
h1{font-size:1.6em}h2{font-size:1.2em;margin-top:0}
.banner{background:#f6f8fa}
.badge{display:inline-block;padding:.15em .6em;border-radius:1em;font-size:.85em;font-weight:600}
.badge-review{background:#fff3cd;color:#7a5b00;border:1px solid #e0c36b}
.badge-ok{background:#e6f4ea;color:#1e6b34;border:1px solid #9bd3ab}
.graph svg{max-width:100%;height:auto}
pre{background:#f6f8fa;padding:.8em;overflow-x:auto;white-space:pre-wrap}
.notice{color:#7a5b00}
table{border-collapse:collapse}td,th{padding:.2em .6em;border-bottom:1px solid #eee;text-align:left;vertical-align:top}
.msg-error{color:#b00020}
";

/// Removes the XML declaration and doctype a renderer puts before `<svg`.
fn inline_svg(svg: &str) -> &str {
    match svg.find("<svg") {
        Some(start) => svg[start..].trim_end(),
        None => svg.trim(),
    }
}

fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(b"\x89PNG\r\n\x1a\n")
}

fn section_open(out: &mut String, id: &str, title: &str, class: Option<&str>) {
    match class {
        Some(c) => {
            let _ = write!(out, "<section id=\"{id}\" class=\"{c}\">\n<h2>{}</h2>\n", escape_html(title));
        }
        None => {
            let _ = write!(out, "<section id=\"{id}\">\n<h2>{}</h2>\n", escape_html(title));
        }
    }
}

fn paragraph_section(out: &mut String, id: &str, title: &str, text: &str) {
    section_open(out, id, title, None);
    let _ = writeln!(out, "<p>{}</p>", escape_html(text));
    out.push_str("</section>\n");
}

fn summary(out: &mut String, bundle: &AnalysisBundle) {
    section_open(out, "summary", "Summary", Some("banner"));
    let t = &bundle.trace;
    let _ = writeln!(
        out,
        "<p><strong>Trace:</strong> <code>{}</code></p>",
        escape_html(&t.trace_id)
    );
    match &bundle.annotation {
        Some(a) => {
            let _ = writeln!(
                out,
                "<p><strong>Category:</strong> {} ({})<br><strong>Subcategory:</strong> {}<br><strong>Confidence:</strong> {} <span class=\"muted\">[{}]</span></p>",
                escape_html(a.category.display_name()),
                escape_html(a.category.as_str()),
                escape_html(a.subcategory.label),
                a.confidence,
                escape_html(a.source.as_str()),
            );
            if a.needs_review {
                let _ = writeln!(
                    out,
                    "<p><span class=\"badge {REVIEW_BADGE_CLASS}\" {REVIEW_MARKER}>Needs review: confidence not above {}</span></p>",
                    crate::taxonomy::REVIEW_THRESHOLD
                );
            } else {
                out.push_str(
                    "<p><span class=\"badge badge-ok\" data-needs-review=\"false\">High confidence</span></p>\n",
                );
            }
            let _ = writeln!(out, "<p><strong>Reasoning:</strong> {}</p>", escape_html(&a.reasoning));
        }
        None => {
            let _ = writeln!(
                out,
                "<p><strong>Outcome:</strong> {}: {NO_FAILURE_TEXT}.</p>",
                escape_html(t.outcome.status.as_str())
            );
        }
    }
    let s = &t.scenario;
    let _ = writeln!(
        out,
        "<p><strong>Task:</strong> {}</p>\n<p><strong>Scenario:</strong> iteration limit {}, {} prompt, {} tools, {} difficulty; {} iterations used, {}s wall time</p>",
        escape_html(&t.task_description),
        s.iteration_limit,
        s.prompt_quality.as_str(),
        s.tool_availability.as_str(),
        s.task_difficulty.as_str(),
        t.outcome.iterations_used,
        t.outcome.wall_time_seconds,
    );
    if let Some(reason) = bundle.explanation.as_ref().and_then(|e| e.fallback_reason.as_ref()) {
        let _ = writeln!(
            out,
            "<p class=\"notice\">Explanation generated from templates after the LLM call failed: {}</p>",
            escape_html(reason)
        );
    }
    out.push_str("</section>\n");
}

fn execution_flow(out: &mut String, bundle: &AnalysisBundle, image: Option<&[u8]>) {
    section_open(out, "execution-flow", "Execution flow", Some("graph"));
    match image {
        Some(bytes) if is_png(bytes) => {
            let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
            let _ = writeln!(
                out,
                "<img alt=\"Execution flow graph\" src=\"data:image/png;base64,{encoded}\">"
            );
        }
        Some(bytes) => {
            let svg = String::from_utf8_lossy(bytes);
            out.push_str(inline_svg(&svg));
            out.push('\n');
        }
        None => {
            let _ = writeln!(out, "<p class=\"notice\">{RENDERER_MISSING_NOTICE}</p>");
            let _ = writeln!(
                out,
                "<pre class=\"dot-source\">{}</pre>",
                escape_html(&emit_dot(&bundle.graph))
            );
        }
    }
    let failures: Vec<_> = bundle.graph.failure_points().collect();
    if !failures.is_empty() {
        out.push_str("<p><strong>Failure points:</strong></p>\n<ul>\n");
        for n in failures {
            let _ = writeln!(
                out,
                "<li class=\"failure-point\" data-node=\"{}\">{}</li>",
                escape_html(&n.id),
                escape_html(&n.label)
            );
        }
        out.push_str("</ul>\n");
    }
    out.push_str("</section>\n");
}

fn recommendations(out: &mut String, recs: &[Recommendation]) {
    section_open(out, "recommendations", "Recommendations", None);
    for tier in Tier::ALL {
        let in_tier: Vec<_> = recs.iter().filter(|r| r.tier == tier).collect();
        if in_tier.is_empty() {
            continue;
        }
        let _ = write!(
            out,
            "<h3 data-tier=\"{}\">{}</h3>\n<ul>\n",
            tier.as_str(),
            escape_html(tier.title())
        );
        for r in in_tier {
            let _ = writeln!(
                out,
                "<li><strong>{}</strong><br>{}</li>",
                escape_html(&r.text),
                escape_html(&r.rationale)
            );
        }
        out.push_str("</ul>\n");
    }
    out.push_str("</section>\n");
}

fn appendix(out: &mut String, trace: &ExecutionTrace) {
    section_open(out, "trace-appendix", "Full trace", None);
    let _ = writeln!(
        out,
        "<details>\n<summary>{} messages, {} errors</summary>",
        trace.messages.len(),
        trace.errors.len()
    );
    out.push_str("<table>\n<tr><th>#</th><th>Role</th><th>Content</th></tr>\n");
    for m in &trace.messages {
        let mut content = escape_html(&m.content);
        if let Some(name) = &m.tool_call_name {
            let _ = write!(
                content,
                "<pre>{}({})</pre>",
                escape_html(name),
                escape_html(m.tool_call_args.as_deref().unwrap_or(""))
            );
        }
        if let Some(target) = m.responds_to {
            let _ = write!(content, " <em>(result of #{target})</em>");
        }
        for e in trace.errors.iter().filter(|e| e.message_index == m.index) {
            let _ = write!(
                content,
                "<div class=\"msg-error\">{}: {}</div>",
                escape_html(&e.error_type),
                escape_html(&e.message)
            );
            if let Some(stack) = &e.stack_trace {
                let _ = write!(content, "<pre>{}</pre>", escape_html(stack));
            }
        }
        let _ = writeln!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{content}</td></tr>",
            m.index,
            m.role.as_str()
        );
    }
    out.push_str("</table>\n");
    if let Some(output) = &trace.outcome.final_output {
        let _ = writeln!(out, "<p><strong>Final output:</strong></p>\n<pre>{}</pre>", escape_html(output));
    }
    out.push_str("</details>\n</section>\n");
}

/// Renders a single self-contained HTML document. `graph_image` may be SVG
/// (inlined) or PNG (embedded as a data URI); without it the DOT source is
/// shown.
pub fn render_html(bundle: &AnalysisBundle, graph_image: Option<&[u8]>) -> String {
    let mut out = String::new();
    let title = format!("Failure analysis: {}", bundle.trace.trace_id);
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>\n{STYLE}</style>\n</head>\n<body>\n<h1>{}</h1>\n",
        escape_html(&title),
        escape_html(&title)
    );
    summary(&mut out, bundle);
    execution_flow(&mut out, bundle, graph_image);
    if bundle.annotation.is_some() {
        if let Some(e) = &bundle.explanation {
            paragraph_section(&mut out, "root-cause", "Root cause", &e.root_cause);
            paragraph_section(&mut out, "failure-mechanism", "Failure mechanism", &e.failure_mechanism);
            paragraph_section(&mut out, "context", "Context", &e.context_integration);
            paragraph_section(&mut out, "counterfactual", "Counterfactual", &e.counterfactual);
        }
        recommendations(&mut out, &bundle.recommendations);
    }
    appendix(&mut out, &bundle.trace);
    let _ = write!(
        out,
        "<footer><p>Generated {} by",
        escape_html(&format_timestamp(&bundle.generated_at))
    );
    for (tool, version) in &bundle.tool_versions {
        let _ = write!(out, " {} {};", escape_html(tool), escape_html(version));
    }
    out.push_str("</p></footer>\n</body>\n</html>\n");
    out
}
