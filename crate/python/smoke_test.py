"""Smoke test for the failscope Python extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/failscope-*.whl
"""

import json
import tempfile
from pathlib import Path

import failscope


def main() -> None:
    assert failscope.categories()[-1] == "iterative_refinement_failure"
    assert failscope.subcategories_of("testing_validation_failure") == ["Did not run validation tests"]

    trace = failscope.generate_trace("iterative_refinement_failure", iteration_limit=2, seed=7)
    assert trace.validate() == []
    assert trace.is_failure()
    again = failscope.parse_trace(trace.to_json())
    assert again.to_json() == trace.to_json()

    features = failscope.extract_features(trace)
    assert features["hit_iteration_limit"] is True

    annotation = failscope.classify_trace(trace)
    assert annotation.category == "iterative_refinement_failure"
    assert annotation.confidence == 0.9 and not annotation.needs_review
    assert failscope.Annotation("planning_failure", 0.8, "r").needs_review

    dot = failscope.build_dot(trace, annotation)
    assert dot.startswith("digraph execution_flow {")

    report = failscope.analyze(trace, generated_at="2026-01-01T00:00:00Z")
    doc = json.loads(report["json"])
    assert doc["trace_id"] == trace.trace_id
    assert report["html"].count("<section id=") == 8
    assert failscope.analyze(trace, generated_at="2026-01-01T00:00:00Z") == report

    corpus = failscope.reference_corpus()
    gold = [failscope.Annotation(category, 1.0, "gold") for _, category in corpus]
    dist = failscope.summarize_distribution(gold)
    assert dist["total"] == 32 and dist["iterative_refinement_failure"] == 18

    predicted = [failscope.classify_trace(t) for t, _ in corpus]
    acc = failscope.accuracy(predicted, [c for _, c in corpus])
    assert 0.0 <= acc <= 1.0
    assert failscope.cohen_kappa([("a", "a"), ("b", "b")]) == 1.0
    assert abs(failscope.cohen_kappa([("0", "0"), ("0", "0"), ("1", "0"), ("0", "1"), ("1", "1"), ("1", "1")]) - 1 / 3) < 1e-12

    data = Path(__file__).resolve().parent.parent / "crates/core/tests/data/reference_eval"
    metrics = failscope.evaluate(str(data / "predictions.json"), str(data / "gold.json"))
    assert metrics["accuracy"] == 0.8125

    with tempfile.TemporaryDirectory() as tmp:
        assert failscope.write_corpus(tmp) == 32
        assert len(list(Path(tmp, "traces").glob("*.json"))) == 32

    try:
        failscope.parse_trace("{}")
    except failscope.FailscopeError as err:
        assert "PARSE_ERROR" in str(err)
    else:
        raise AssertionError("expected FailscopeError")

    success = failscope.generate_trace("success", iteration_limit=5, seed=1)
    try:
        failscope.classify_trace(success)
    except failscope.FailscopeError as err:
        assert "NOT_A_FAILURE" in str(err)
    else:
        raise AssertionError("expected NOT_A_FAILURE")

    print(f"failscope {failscope.__version__}: python smoke test passed")


if __name__ == "__main__":
    main()
