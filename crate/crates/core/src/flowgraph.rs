//! Execution-flow graphs: construction from a trace, DOT emission, and
//! rendering through an external Graphviz-compatible binary.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::taxonomy::Annotation;
use crate::trace::{validate_trace, ExecutionTrace, OutcomeStatus, Role};

pub const LABEL_LIMIT: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    TaskStart,
    Reasoning,
    ToolCall,
    ToolResult,
    Error,
    Decision,
    Outcome,
}

impl NodeKind {
    fn shape(self) -> &'static str {
        match self {
            NodeKind::TaskStart | NodeKind::Outcome => "box",
            NodeKind::Reasoning => "ellipse",
            NodeKind::ToolCall => "box",
            NodeKind::ToolResult => "note",
            NodeKind::Error => "octagon",
            NodeKind::Decision => "diamond",
        }
    }

    fn rounded(self) -> bool {
        matches!(self, NodeKind::TaskStart | NodeKind::Outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    pub is_failure_point: bool,
    pub message_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from_id: String,
    pub to_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<FlowEdge>,
}

/// Collapses whitespace and cuts to [`LABEL_LIMIT`] characters, marking the
/// cut with an ellipsis.
pub fn truncate_label(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.chars().count() <= LABEL_LIMIT {
        return collapsed;
    }
    let mut out: String = collapsed.chars().take(LABEL_LIMIT - 1).collect();
    out.push('…');
    out
}

fn message_node_id(index: usize) -> String {
    format!("n{index:04}")
}

pub fn build_graph(trace: &ExecutionTrace, annotation: Option<&Annotation>) -> Result<FlowGraph, Error> {
    let violations = validate_trace(trace);
    if !violations.is_empty() {
        return Err(Error::InvalidTrace(violations));
    }

    let mut errors_by_message: HashMap<usize, Vec<&crate::trace::ErrorRecord>> = HashMap::new();
    for err in &trace.errors {
        errors_by_message.entry(err.message_index).or_default().push(err);
    }

    let mut nodes = Vec::with_capacity(trace.messages.len() + trace.errors.len() + 1);
    let mut pending_error = false;
    for (pos, m) in trace.messages.iter().enumerate() {
        let (kind, label) = if pos == 0 {
            (NodeKind::TaskStart, format!("Task: {}", m.content))
        } else {
            match m.role {
                Role::Human => (NodeKind::Reasoning, format!("Human: {}", m.content)),
                Role::Tool => (NodeKind::ToolResult, format!("Result: {}", m.content)),
                Role::Agent => {
                    let base = match &m.tool_call_name {
                        Some(name) => {
                            format!("{name}({})", m.tool_call_args.as_deref().unwrap_or(""))
                        }
                        None => m.content.clone(),
                    };
                    if pending_error {
                        pending_error = false;
                        (NodeKind::Decision, format!("Recover: {base}"))
                    } else if m.tool_call_name.is_some() {
                        (NodeKind::ToolCall, base)
                    } else {
                        (NodeKind::Reasoning, base)
                    }
                }
            }
        };
        nodes.push(FlowNode {
            id: message_node_id(m.index),
            kind,
            label: truncate_label(&label),
            is_failure_point: false,
            message_index: Some(m.index),
        });

        if let Some(errs) = errors_by_message.get(&m.index) {
            let recovered = trace
                .messages
                .iter()
                .any(|later| later.role == Role::Agent && later.index > m.index);
            for (k, err) in errs.iter().enumerate() {
                nodes.push(FlowNode {
                    id: format!("{}_e{k}", message_node_id(m.index)),
                    kind: NodeKind::Error,
                    label: truncate_label(&format!("{}: {}", err.error_type, err.message)),
                    is_failure_point: !recovered,
                    message_index: Some(m.index),
                });
            }
            pending_error = true;
        }
    }

    let failed = trace.outcome.status == OutcomeStatus::Failure;
    let mut outcome_label = format!("Outcome: {}", trace.outcome.status.as_str());
    if let (true, Some(a)) = (failed, annotation) {
        let _ = write!(outcome_label, " ({})", a.category.display_name());
    }
    nodes.push(FlowNode {
        id: "end".into(),
        kind: NodeKind::Outcome,
        label: truncate_label(&outcome_label),
        is_failure_point: failed,
        message_index: None,
    });

    let edges = nodes
        .windows(2)
        .map(|pair| {
            let (from, to) = (&pair[0], &pair[1]);
            let label = match (from.kind, to.kind) {
                (_, NodeKind::Error) if from.kind != NodeKind::Error => Some("raises".to_string()),
                (_, NodeKind::Outcome) => Some(trace.outcome.status.as_str().to_string()),
                (NodeKind::Error, NodeKind::Decision) => Some("recovers".to_string()),
                _ => None,
            };
            FlowEdge {
                from_id: from.id.clone(),
                to_id: to.id.clone(),
                label,
            }
        })
        .collect();

    Ok(FlowGraph { nodes, edges })
}

impl FlowGraph {
    pub fn node(&self, id: &str) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn failure_points(&self) -> impl Iterator<Item = &FlowNode> {
        self.nodes.iter().filter(|n| n.is_failure_point)
    }

    /// Kahn topological order of node ids, or `None` if the graph has a cycle
    /// or an edge endpoint is missing. Ties are broken by node order.
    pub fn topological_order(&self) -> Option<Vec<&str>> {
        let position: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let (&from, &to) = (position.get(e.from_id.as_str())?, position.get(e.to_id.as_str())?);
            out[from].push(to);
            indegree[to] += 1;
        }
        let mut ready: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_front() {
            order.push(self.nodes[i].id.as_str());
            for &j in &out[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push_back(j);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }
}

fn dot_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out
}

pub const FAILURE_STYLE: &str = r#"fillcolor="red", fontcolor="white""#;

pub fn emit_dot(graph: &FlowGraph) -> String {
    let mut out = String::from("digraph execution_flow {\n    rankdir=TB;\n");
    for n in &graph.nodes {
        let mut styles = Vec::new();
        if n.kind.rounded() {
            styles.push("rounded");
        }
        if n.is_failure_point {
            styles.push("filled");
        }
        let _ = write!(
            out,
            "    {} [label=\"{}\", shape={}",
            n.id,
            dot_escape(&n.label),
            n.kind.shape()
        );
        if !styles.is_empty() {
            let _ = write!(out, ", style=\"{}\"", styles.join(","));
        }
        if n.is_failure_point {
            let _ = write!(out, ", {FAILURE_STYLE}");
        }
        out.push_str("];\n");
    }
    for e in &graph.edges {
        let _ = write!(out, "    {} -> {}", e.from_id, e.to_id);
        if let Some(label) = &e.label {
            let _ = write!(out, " [label=\"{}\"]", dot_escape(label));
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Svg,
    Png,
}

impl ImageFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageFormat::Svg => "svg",
            ImageFormat::Png => "png",
        }
    }
}

/// Runs an external DOT renderer (`dot` by default) as a subprocess.
#[derive(Debug, Clone)]
pub struct DotRenderer {
    program: PathBuf,
}

impl Default for DotRenderer {
    fn default() -> Self {
        DotRenderer {
            program: PathBuf::from("dot"),
        }
    }
}

impl DotRenderer {
    pub fn with_program(program: impl Into<PathBuf>) -> Self {
        DotRenderer {
            program: program.into(),
        }
    }

    /// Resolves the program on PATH (or as given, if it contains a separator).
    pub fn locate(&self) -> Option<PathBuf> {
        if self.program.components().count() > 1 {
            return is_executable(&self.program).then(|| self.program.clone());
        }
        let path = std::env::var_os("PATH")?;
        std::env::split_paths(&path)
            .map(|dir| dir.join(&self.program))
            .find(|candidate| is_executable(candidate))
    }

    pub fn is_available(&self) -> bool {
        self.locate().is_some()
    }

    pub fn render(&self, graph: &FlowGraph, format: ImageFormat) -> Result<Vec<u8>, Error> {
        self.render_dot(&emit_dot(graph), format)
    }

    pub fn render_dot(&self, dot: &str, format: ImageFormat) -> Result<Vec<u8>, Error> {
        let program = self
            .locate()
            .ok_or_else(|| Error::RendererNotFound(self.program.display().to_string()))?;
        let mut child = Command::new(&program)
            .arg(format!("-T{}", format.as_str()))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::RendererFailed {
                status: "spawn failure".into(),
                stderr: e.to_string(),
            })?;
        let mut stdin = child.stdin.take().expect("stdin piped");
        let input = dot.to_owned();
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let output = child.wait_with_output().map_err(|e| Error::RendererFailed {
            status: "wait failure".into(),
            stderr: e.to_string(),
        })?;
        let write_result = writer.join().expect("writer thread");
        if !output.status.success() {
            return Err(Error::RendererFailed {
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        if let Err(e) = write_result {
            return Err(Error::RendererFailed {
                status: output.status.to_string(),
                stderr: format!("could not write DOT to renderer: {e}"),
            });
        }
        Ok(output.stdout)
    }
}

#[cfg(unix)]
fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    path.metadata()
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

#[cfg(not(unix))]
fn is_executable(path: &Path) -> bool {
    path.is_file()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::tests::{call, minimal, msg, result};
    use crate::trace::ErrorRecord;

    fn err(index: usize, kind: &str) -> ErrorRecord {
        ErrorRecord {
            error_type: kind.into(),
            message: "failed".into(),
            stack_trace: None,
            message_index: index,
        }
    }

    fn kinds(g: &FlowGraph) -> Vec<NodeKind> {
        g.nodes.iter().map(|n| n.kind).collect()
    }

    #[test]
    fn minimal_success_graph() {
        let mut t = minimal();
        t.messages.push(msg(1, Role::Agent, "here is the answer"));
        t.outcome.iterations_used = 1;
        let g = build_graph(&t, None).unwrap();
        assert_eq!(kinds(&g), [NodeKind::TaskStart, NodeKind::Reasoning, NodeKind::Outcome]);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.failure_points().count(), 0);
        assert_eq!(g.nodes[0].id, "n0000");
        assert_eq!(g.nodes[2].id, "end");
    }

    #[test]
    fn unrecovered_error_and_failed_outcome_are_flagged() {
        let mut t = minimal();
        t.outcome.status = OutcomeStatus::Failure;
        t.messages.extend([call(1, "run_code", "x"), result(2, 1, "boom")]);
        t.errors.push(err(2, "RuntimeError"));
        t.outcome.iterations_used = 1;
        let g = build_graph(&t, None).unwrap();
        assert_eq!(
            kinds(&g),
            [
                NodeKind::TaskStart,
                NodeKind::ToolCall,
                NodeKind::ToolResult,
                NodeKind::Error,
                NodeKind::Outcome
            ]
        );
        let flagged: Vec<&str> = g.failure_points().map(|n| n.id.as_str()).collect();
        assert_eq!(flagged, ["n0002_e0", "end"]);
    }

    #[test]
    fn retry_after_error_becomes_decision() {
        let mut t = minimal();
        t.outcome.status = OutcomeStatus::Failure;
        t.messages.extend([
            call(1, "run_code", "x"),
            result(2, 1, "boom"),
            call(3, "run_code", "y"),
            result(4, 3, "ok"),
        ]);
        t.errors.push(err(2, "RuntimeError"));
        t.outcome.iterations_used = 2;
        let g = build_graph(&t, None).unwrap();
        assert_eq!(g.nodes[4].kind, NodeKind::Decision);
        assert!(g.nodes[4].label.starts_with("Recover: run_code(y)"));
        assert!(!g.nodes[3].is_failure_point);
        assert_eq!(g.edges[3].label.as_deref(), Some("recovers"));
    }

    #[test]
    fn errors_on_one_message_chain_in_series() {
        let mut t = minimal();
        t.outcome.status = OutcomeStatus::Failure;
        t.messages.extend([call(1, "run_code", "x"), result(2, 1, "boom")]);
        t.errors.extend([err(2, "A"), err(2, "B")]);
        t.outcome.iterations_used = 1;
        let g = build_graph(&t, None).unwrap();
        assert_eq!(g.nodes.len(), t.messages.len() + t.errors.len() + 1);
        assert_eq!(g.edges[3].from_id, "n0002_e0");
        assert_eq!(g.edges[3].to_id, "n0002_e1");
        assert_eq!(g.edges[3].label, None);
        assert!(g.topological_order().is_some());
    }

    #[test]
    fn labels_are_truncated() {
        let long = "word ".repeat(40);
        let label = truncate_label(&long);
        assert_eq!(label.chars().count(), LABEL_LIMIT);
        assert!(label.ends_with('…'));
        assert_eq!(truncate_label("a\n  b"), "a b");
    }

    #[test]
    fn dot_structure_and_determinism() {
        let mut t = minimal();
        t.messages.push(msg(1, Role::Agent, "say \"hi\" \\ there"));
        t.outcome.iterations_used = 1;
        let g = build_graph(&t, None).unwrap();
        let dot = emit_dot(&g);
        assert_eq!(dot, emit_dot(&g));
        let node_lines = dot.lines().filter(|l| l.contains("[label=") && !l.contains("->")).count();
        let edge_lines = dot.lines().filter(|l| l.contains("->")).count();
        assert_eq!((node_lines, edge_lines), (3, 2));
        assert!(dot.contains(r#"say \"hi\" \\ there"#));
        assert!(dot.starts_with("digraph execution_flow {"));
        assert!(dot.contains("n0000 [label=\"Task: reverse a string\", shape=box, style=\"rounded\"];"));
    }

    #[test]
    fn failure_style_applies_only_to_failure_points() {
        let mut t = minimal();
        t.outcome.status = OutcomeStatus::Failure;
        t.messages.push(msg(1, Role::Agent, "answer"));
        t.outcome.iterations_used = 1;
        let dot = emit_dot(&build_graph(&t, None).unwrap());
        let styled: Vec<&str> = dot.lines().filter(|l| l.contains(FAILURE_STYLE)).collect();
        assert_eq!(styled.len(), 1);
        assert!(styled[0].contains("style=\"rounded,filled\""));
    }

    #[test]
    fn outcome_label_names_category() {
        use crate::taxonomy::{AnnotationSource, FailureCategory};
        let mut t = minimal();
        t.outcome.status = OutcomeStatus::Failure;
        let a = Annotation::new(FailureCategory::PlanningFailure, 0.5, "r", AnnotationSource::Human)
            .unwrap();
        let g = build_graph(&t, Some(&a)).unwrap();
        assert_eq!(g.nodes.last().unwrap().label, "Outcome: failure (Planning Failure)");
    }

    #[test]
    fn cycle_detection() {
        let mut t = minimal();
        t.messages.push(msg(1, Role::Agent, "a"));
        t.outcome.iterations_used = 1;
        let mut g = build_graph(&t, None).unwrap();
        assert_eq!(g.topological_order().unwrap(), ["n0000", "n0001", "end"]);
        g.edges.push(FlowEdge {
            from_id: "end".into(),
            to_id: "n0000".into(),
            label: None,
        });
        assert!(g.topological_order().is_none());
    }

    #[test]
    fn missing_renderer() {
        let r = DotRenderer::with_program("definitely-not-a-dot-binary-xyz");
        let g = FlowGraph::default();
        assert!(matches!(
            r.render(&g, ImageFormat::Svg),
            Err(Error::RendererNotFound(_))
        ));
    }
}
