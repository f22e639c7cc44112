//! The shipped evaluation fixture must match what the generator produces.
//! Set `FAILSCOPE_REGENERATE=1` to rewrite it.

use std::path::PathBuf;

use failscope::fixtures::write_reference_eval_fixture;

fn shipped() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/reference_eval")
}

#[test]
fn reference_eval_fixture_matches_generator() {
    if std::env::var_os("FAILSCOPE_REGENERATE").is_some() {
        write_reference_eval_fixture(&shipped()).unwrap();
    }
    let fresh = tempfile::tempdir().unwrap();
    write_reference_eval_fixture(fresh.path()).unwrap();
    for name in ["gold.json", "predictions.json"] {
        let expected = std::fs::read_to_string(fresh.path().join(name)).unwrap();
        let actual = std::fs::read_to_string(shipped().join(name))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(actual, expected, "{name} is stale");
    }
}
