mod common;

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use common::*;
use failscope::error::Error;
use failscope::fixtures::{generate_trace, FixtureKind, FixtureSpec};
use failscope::flowgraph::{build_graph, emit_dot, DotRenderer, ImageFormat};
use failscope::pipeline::{OutputFormat, Pipeline};
use failscope::taxonomy::FailureCategory;
use failscope::trace::{PromptQuality, ScenarioConfig, TaskDifficulty, ToolAvailability};

/// Stand-in for Graphviz: echoes the byte count of stdin inside an SVG (with
/// the usual XML prologue) or emits a PNG signature.
const FAKE_DOT: &str = r#"#!/bin/sh
n=$(wc -c | tr -d ' ')
case "$1" in
  -Tsvg)
    printf '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
    printf '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
    printf '<svg xmlns="http://www.w3.org/2000/svg" data-bytes="%s"><g id="graph0"/></svg>\n' "$n"
    ;;
  -Tpng)
    printf '\211PNG\r\n\032\nFAKE'
    ;;
  *)
    echo "unsupported $1" >&2
    exit 3
    ;;
esac
"#;

const FAILING_DOT: &str = "#!/bin/sh\ncat >/dev/null\necho 'syntax error in line 1' >&2\nexit 1\n";

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path
}

fn spec() -> FixtureSpec {
    FixtureSpec {
        kind: FixtureKind::Failure(FailureCategory::IterativeRefinementFailure),
        scenario: ScenarioConfig {
            iteration_limit: 5,
            prompt_quality: PromptQuality::Detailed,
            tool_availability: ToolAvailability::Full,
            task_difficulty: TaskDifficulty::Hard,
        },
        seed: 11,
    }
}

#[test]
fn fake_renderer_receives_dot_on_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let renderer = DotRenderer::with_program(script(dir.path(), "dot", FAKE_DOT));
    let graph = build_graph(&generate_trace(&spec()), None).unwrap();
    let dot = emit_dot(&graph);
    let svg = String::from_utf8(renderer.render(&graph, ImageFormat::Svg).unwrap()).unwrap();
    assert!(svg.contains(&format!("data-bytes=\"{}\"", dot.len())), "{svg}");
    let png = renderer.render(&graph, ImageFormat::Png).unwrap();
    assert!(png.starts_with(b"\x89PNG\r\n\x1a\n"));
}

#[test]
fn renderer_failure_and_absence() {
    let dir = tempfile::tempdir().unwrap();
    let failing = DotRenderer::with_program(script(dir.path(), "dot", FAILING_DOT));
    match failing.render_dot("digraph {", ImageFormat::Svg) {
        Err(Error::RendererFailed { stderr, .. }) => assert!(stderr.contains("syntax error")),
        other => panic!("unexpected {other:?}"),
    }
    let missing = DotRenderer::with_program(dir.path().join("nope"));
    assert!(!missing.is_available());
    assert!(matches!(
        missing.render_dot("digraph {}", ImageFormat::Svg),
        Err(Error::RendererNotFound(_))
    ));
}

#[test]
fn pipeline_inlines_rendered_svg_and_writes_images() {
    let dir = tempfile::tempdir().unwrap();
    let renderer = DotRenderer::with_program(script(dir.path(), "dot", FAKE_DOT));
    let pipeline = Pipeline::new(run_config(&dir.path().join("out"), "html,svg,png")).with_renderer(renderer);
    let analysis = pipeline.analyze(generate_trace(&spec())).unwrap();
    let out = pipeline.render(&analysis.bundle).unwrap();
    assert!(out.warnings.is_empty());
    let html = String::from_utf8(out.files[&OutputFormat::Html].clone()).unwrap();
    assert!(html.contains("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert!(!html.contains("<?xml"));
    assert!(!html.contains("<!DOCTYPE svg"));
    assert!(html_errors(&html).is_empty(), "{:?}", html_errors(&html));
    assert!(out.files[&OutputFormat::Png].starts_with(b"\x89PNG"));
    assert!(out.files.contains_key(&OutputFormat::Svg));
}

#[test]
fn real_graphviz_when_installed() {
    let renderer = DotRenderer::default();
    if !renderer.is_available() {
        eprintln!("dot not on PATH; skipping real renderer check");
        return;
    }
    let graph = build_graph(&generate_trace(&spec()), None).unwrap();
    let svg = String::from_utf8(renderer.render(&graph, ImageFormat::Svg).unwrap()).unwrap();
    assert!(svg.contains("<svg"));
    for node in &graph.nodes {
        assert!(svg.contains(&format!("<title>{}</title>", node.id)), "{}", node.id);
    }
    let png = renderer.render(&graph, ImageFormat::Png).unwrap();
    assert!(png.starts_with(b"\x89PNG\r\n\x1a\n"));
}
