//! Seeded synthetic traces for every failure category plus success, and the
//! 32-trace labeled corpus with fixed per-category counts.
//!
//! Generation uses ChaCha8 seeded from the fixture's `seed` and draws only `u32`
//! ranges, so output is identical across platforms and pointer widths.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Error;
use crate::eval::{GoldRecord, PredictionRecord};
use crate::taxonomy::{Annotation, AnnotationSource, FailureCategory};
use crate::trace::{
    count_iterations, ErrorRecord, ExecutionTrace, MessageRecord, OutcomeRecord, OutcomeStatus,
    PromptQuality, Role, ScenarioConfig, TaskDifficulty, ToolAvailability, TRACE_SCHEMA_VERSION,
};

/// Identifies the generation algorithm; bump when output changes.
pub const GENERATOR_ID: &str = "failscope-fixtures/chacha8-v1";

/// Iteration limits used in the experimental scenarios.
pub const ITERATION_LIMITS: [u32; 4] = [1, 2, 5, 10];

/// Per-category counts of the labeled failure corpus, in taxonomy order.
pub const CORPUS_COUNTS: [(FailureCategory, usize); 5] = [
    (FailureCategory::PlanningFailure, 1),
    (FailureCategory::CodeGenerationFailure, 2),
    (FailureCategory::TestingValidationFailure, 2),
    (FailureCategory::UnderstandingFailure, 9),
    (FailureCategory::IterativeRefinementFailure, 18),
];

const CORPUS_BASE_SEED: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    Success,
    #[serde(untagged)]
    Failure(FailureCategory),
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 6] = [
        FixtureKind::Failure(FailureCategory::PlanningFailure),
        FixtureKind::Failure(FailureCategory::CodeGenerationFailure),
        FixtureKind::Failure(FailureCategory::TestingValidationFailure),
        FixtureKind::Failure(FailureCategory::UnderstandingFailure),
        FixtureKind::Failure(FailureCategory::IterativeRefinementFailure),
        FixtureKind::Success,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            FixtureKind::Success => "success",
            FixtureKind::Failure(c) => category_slug(c),
        }
    }
}

fn category_slug(c: FailureCategory) -> &'static str {
    match c {
        FailureCategory::PlanningFailure => "planning",
        FailureCategory::CodeGenerationFailure => "code-generation",
        FailureCategory::TestingValidationFailure => "testing-validation",
        FailureCategory::UnderstandingFailure => "understanding",
        FailureCategory::IterativeRefinementFailure => "iterative-refinement",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    pub scenario: ScenarioConfig,
    pub seed: u64,
}

impl FixtureSpec {
    pub fn trace_id(&self) -> String {
        let s = &self.scenario;
        format!(
            "fx-{}-l{}-{}-{}-{}-s{}",
            self.kind.slug(),
            s.iteration_limit,
            s.prompt_quality.as_str(),
            s.tool_availability.as_str(),
            s.task_difficulty.as_str(),
            self.seed
        )
    }
}

struct Task {
    name: &'static str,
    description: &'static str,
    misreading: &'static str,
    plan: [&'static str; 3],
}

const TASKS: [Task; 8] = [
    Task {
        name: "has_close_elements",
        description: "Given a list of floats and a threshold, return True if any two values are closer to each other than the threshold.",
        misreading: "return True if the list contains an exact duplicate",
        plan: ["sort the values", "compare adjacent pairs", "return the comparison result"],
    },
    Task {
        name: "separate_paren_groups",
        description: "Split a string of balanced, non-nested parenthesis groups into a list of the groups, ignoring spaces.",
        misreading: "count how many parenthesis groups the string contains",
        plan: ["strip spaces", "track nesting depth", "cut a group whenever depth returns to zero"],
    },
    Task {
        name: "below_zero",
        description: "Given deposit and withdrawal operations on an account starting at zero, return True if the balance ever drops below zero.",
        misreading: "return True if the final balance is negative",
        plan: ["start a running balance", "apply each operation", "check the balance after every step"],
    },
    Task {
        name: "intersperse",
        description: "Insert a delimiter between every two consecutive elements of a list of integers.",
        misreading: "append the delimiter after every element",
        plan: ["handle the empty list", "emit each element followed by the delimiter", "drop the trailing delimiter"],
    },
    Task {
        name: "parse_nested_parens",
        description: "For each space-separated group of parentheses, return the deepest level of nesting.",
        misreading: "return the total number of parentheses in each group",
        plan: ["split on spaces", "scan each group tracking depth", "record the maximum depth per group"],
    },
    Task {
        name: "rolling_max",
        description: "Return the list of rolling maximum elements found until each position in a sequence of integers.",
        misreading: "return the maximum of each sliding window of size two",
        plan: ["keep the current maximum", "update it at each element", "append it to the result"],
    },
    Task {
        name: "make_palindrome",
        description: "Find the shortest palindrome that begins with the supplied string.",
        misreading: "check whether the supplied string is a palindrome",
        plan: ["find the longest palindromic suffix", "reverse the remaining prefix", "append it to the string"],
    },
    Task {
        name: "string_xor",
        description: "Given two strings of ones and zeros, return their bitwise XOR as a string.",
        misreading: "return the XOR of the two strings interpreted as integers, in decimal",
        plan: ["pair characters position by position", "xor each pair", "join the resulting bits"],
    },
];

const ERRORS: [(&str, &str); 7] = [
    ("SyntaxError", "invalid syntax (solution.py, line {n})"),
    ("NameError", "name 'result_{n}' is not defined"),
    ("TypeError", "unsupported operand type(s) for +: 'int' and 'str'"),
    ("IndexError", "list index out of range"),
    ("AssertionError", "expected output for case {n} does not match"),
    ("Timeout", "execution exceeded 10 seconds"),
    ("ValueError", "invalid literal for int() with base 10: 'x{n}'"),
];

const WORDS: [&str; 24] = [
    "check", "input", "loop", "index", "value", "list", "result", "case", "edge", "return",
    "handle", "update", "compare", "sorted", "string", "helper", "branch", "empty", "first",
    "track", "state", "build", "again", "output",
];

struct Gen {
    rng: ChaCha8Rng,
    messages: Vec<MessageRecord>,
    errors: Vec<ErrorRecord>,
}

impl Gen {
    fn new(seed: u64) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            messages: Vec::new(),
            errors: Vec::new(),
        }
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.rng.random_range(0..items.len() as u32) as usize]
    }

    fn chance(&mut self, percent: u32) -> bool {
        self.rng.random_range(0..100u32) < percent
    }

    fn filler(&mut self, words: u32) -> String {
        (0..words)
            .map(|_| self.pick(&WORDS))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn push(&mut self, role: Role, content: String) -> usize {
        let index = self.messages.len();
        self.messages.push(MessageRecord {
            index,
            role,
            content,
            tool_call_name: None,
            tool_call_args: None,
            responds_to: None,
        });
        index
    }

    fn call(&mut self, tool: &str, args: String, content: String) -> usize {
        let index = self.push(Role::Agent, content);
        self.messages[index].tool_call_name = Some(tool.into());
        self.messages[index].tool_call_args = Some(args);
        index
    }

    fn result(&mut self, call: usize, content: String) -> usize {
        let index = self.push(Role::Tool, content);
        self.messages[index].responds_to = Some(call);
        index
    }

    fn error(&mut self, at: usize) -> (String, String) {
        let (kind, template) = self.pick(&ERRORS);
        let n = self.rng.random_range(1..40u32);
        let message = template.replace("{n}", &n.to_string());
        let stack = format!(
            "Traceback (most recent call last):\n  File \"solution.py\", line {n}, in <module>\n{kind}: {message}"
        );
        self.errors.push(ErrorRecord {
            error_type: kind.into(),
            message: message.clone(),
            stack_trace: Some(stack),
            message_index: at,
        });
        (kind.into(), message)
    }

    fn code(&mut self, task: &Task, variant: u32) -> String {
        let body = self.filler(3).replace(' ', "_");
        format!("def {}(*args):\n    # attempt {variant}: {body}\n    ...", task.name)
    }
}

pub fn generate_trace(spec: &FixtureSpec) -> ExecutionTrace {
    let mut g = Gen::new(spec.seed);
    let limit = spec.scenario.iteration_limit.max(1);
    let task = &TASKS[g.rng.random_range(0..TASKS.len() as u32) as usize];
    let prompt = format!("Implement `{}`. {}", task.name, task.description);
    g.push(Role::Human, prompt);

    let mut status = OutcomeStatus::Failure;
    let final_output: Option<String>;

    match spec.kind {
        FixtureKind::Failure(FailureCategory::IterativeRefinementFailure) => {
            if g.chance(50) {
                let thought = g.filler(8);
                g.push(Role::Agent, format!("I will write a first version and run it: {thought}."));
            }
            let tool = if g.chance(50) { "run_code" } else { "run_tests" };
            let stuck = limit >= 3 && g.chance(34);
            let stuck_code = g.code(task, 1);
            let mut last_code = String::new();
            for attempt in 1..=limit {
                last_code = if stuck { stuck_code.clone() } else { g.code(task, attempt) };
                let content = if attempt == 1 {
                    format!("Running my implementation of {}.", task.name)
                } else {
                    format!("Retrying after the previous error (attempt {attempt}).")
                };
                let call = g.call(tool, last_code.clone(), content);
                let result = g.result(call, String::new());
                let (kind, message) = g.error(result);
                g.messages[result].content = format!("Execution failed: {kind}: {message}");
            }
            final_output = g.chance(50).then_some(last_code);
        }
        FixtureKind::Failure(FailureCategory::TestingValidationFailure) => {
            let code = g.code(task, 1);
            if limit >= 2 {
                let call = g.call(
                    "write_file",
                    format!("solution.py\n{code}"),
                    "Writing the solution to disk.".into(),
                );
                let bytes = g.rng.random_range(80..400u32);
                g.result(call, format!("wrote {bytes} bytes to solution.py"));
            }
            g.push(
                Role::Agent,
                format!("The implementation of {} is complete and should handle all cases.", task.name),
            );
            final_output = Some(code);
        }
        FixtureKind::Failure(FailureCategory::CodeGenerationFailure) => {
            let code = g.code(task, 1);
            let call = g.call("run_tests", code.clone(), "Running the provided examples.".into());
            let passed = g.rng.random_range(1..4u32);
            g.result(call, format!("{passed} passed, 0 failed"));
            if limit >= 2 {
                g.push(Role::Agent, "All example tests pass; submitting.".into());
            }
            final_output = Some(code);
        }
        FixtureKind::Failure(FailureCategory::UnderstandingFailure) => {
            g.push(
                Role::Agent,
                format!("Restating the task: I need to {}.", task.misreading),
            );
            let code = g.code(task, 1);
            if limit >= 2 {
                let call = g.call("run_tests", code.clone(), "Checking against the examples.".into());
                let result = g.result(call, String::new());
                let n = g.rng.random_range(1..6u32);
                g.errors.push(ErrorRecord {
                    error_type: "AssertionError".into(),
                    message: format!("example {n} returned an unexpected value"),
                    stack_trace: None,
                    message_index: result,
                });
                g.messages[result].content =
                    format!("1 failed: example {n} returned an unexpected value");
                g.push(
                    Role::Agent,
                    "The failing example appears inconsistent with the task; my reading stands, submitting."
                        .into(),
                );
            } else {
                g.push(Role::Agent, "Submitting my solution.".into());
            }
            final_output = Some(code);
        }
        FixtureKind::Failure(FailureCategory::PlanningFailure) => {
            let mut plan = String::from("Plan:");
            for (i, step) in task.plan.iter().enumerate() {
                let _ = write!(plan, " {}. {step}.", i + 1);
            }
            g.push(Role::Agent, plan);
            let partial = g.code(task, 1);
            if limit >= 2 {
                let call = g.call(
                    "write_file",
                    format!("solution.py\n{partial}"),
                    format!("Implementing step 1: {}.", task.plan[0]),
                );
                g.result(call, "wrote solution.py".into());
            }
            g.push(Role::Agent, "Done with the implementation.".into());
            final_output = Some(partial);
        }
        FixtureKind::Success => {
            let code = g.code(task, 1);
            let call = g.call("run_tests", code.clone(), "Validating before submitting.".into());
            let passed = g.rng.random_range(3..9u32);
            g.result(call, format!("{passed} passed, 0 failed"));
            if limit >= 2 {
                g.push(Role::Agent, "All tests pass.".into());
            }
            status = OutcomeStatus::Success;
            final_output = Some(code);
        }
    }

    let wall_ms = g.rng.random_range(800..120_000u32);
    let iterations_used = count_iterations(&g.messages);
    ExecutionTrace {
        schema_version: TRACE_SCHEMA_VERSION.into(),
        trace_id: spec.trace_id(),
        task_description: task.description.into(),
        scenario: ScenarioConfig {
            iteration_limit: limit,
            ..spec.scenario
        },
        messages: g.messages,
        errors: g.errors,
        outcome: OutcomeRecord {
            status,
            final_output,
            iterations_used,
            wall_time_seconds: f64::from(wall_ms) / 1000.0,
        },
    }
}

/// Scenario drawn from the experimental dimensions for corpus entry `seed`.
fn corpus_scenario(category: FailureCategory, seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_a10f);
    let limits: &[u32] = if category == FailureCategory::IterativeRefinementFailure {
        &ITERATION_LIMITS
    } else {
        &ITERATION_LIMITS[1..]
    };
    let mut pick = |n: usize| rng.random_range(0..n as u32) as usize;
    ScenarioConfig {
        iteration_limit: limits[pick(limits.len())],
        prompt_quality: PromptQuality::ALL[pick(4)],
        tool_availability: ToolAvailability::ALL[pick(3)],
        task_difficulty: TaskDifficulty::ALL[pick(3)],
    }
}

#[derive(Debug, Clone)]
pub struct LabeledTrace {
    pub trace: ExecutionTrace,
    pub gold: GoldRecord,
    pub spec: FixtureSpec,
}

/// The 32 labeled failure traces, in taxonomy order.
pub fn generate_reference_corpus() -> Vec<LabeledTrace> {
    let mut out = Vec::new();
    let mut seed = CORPUS_BASE_SEED;
    for (category, count) in CORPUS_COUNTS {
        for ordinal in 1..=count {
            let spec = FixtureSpec {
                kind: FixtureKind::Failure(category),
                scenario: corpus_scenario(category, seed),
                seed,
            };
            let mut trace = generate_trace(&spec);
            trace.trace_id = format!("{}-{ordinal:02}", category_slug(category));
            let gold = GoldRecord::new(trace.trace_id.clone(), category);
            out.push(LabeledTrace { trace, gold, spec });
            seed += 1;
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("fixture data serializes");
    text.push('\n');
    text
}

/// Writes `traces/{trace_id}.json`, `gold.json`, and `manifest.json` (generator
/// id and per-trace seeds) under `dir`.
pub fn write_corpus(dir: &Path) -> Result<Vec<LabeledTrace>, Error> {
    let corpus = generate_reference_corpus();
    let traces_dir = dir.join("traces");
    std::fs::create_dir_all(&traces_dir).map_err(|e| Error::io(&traces_dir, e))?;
    for item in &corpus {
        write_file(
            &traces_dir.join(format!("{}.json", item.trace.trace_id)),
            &item.trace.to_json(),
        )?;
    }
    let gold: Vec<&GoldRecord> = corpus.iter().map(|c| &c.gold).collect();
    write_file(&dir.join("gold.json"), &to_pretty_json(&gold))?;
    let manifest = json!({
        "generator": GENERATOR_ID,
        "traces": corpus.iter().map(|c| json!({
            "trace_id": c.trace.trace_id,
            "seed": c.spec.seed,
            "category": c.gold.category,
        })).collect::<Vec<_>>(),
    });
    write_file(&dir.join("manifest.json"), &to_pretty_json(&manifest))?;
    Ok(corpus)
}

/// Predictions over the corpus with 26 of 32 correct overall and 19 of the
/// 21 predictions above the review threshold correct.
pub fn reference_predictions() -> Vec<PredictionRecord> {
    use FailureCategory::*;
    // (trace_id, predicted category, confidence)
    let mut rows: Vec<(String, FailureCategory, f64)> = vec![
        ("planning-01".into(), PlanningFailure, 0.62),
        ("code-generation-01".into(), CodeGenerationFailure, 0.55),
        ("code-generation-02".into(), TestingValidationFailure, 0.7),
        ("testing-validation-01".into(), TestingValidationFailure, 0.72),
        ("testing-validation-02".into(), CodeGenerationFailure, 0.65),
        ("understanding-01".into(), UnderstandingFailure, 0.86),
        ("understanding-02".into(), UnderstandingFailure, 0.88),
        ("understanding-03".into(), UnderstandingFailure, 0.91),
        ("understanding-04".into(), CodeGenerationFailure, 0.82),
        ("understanding-05".into(), UnderstandingFailure, 0.8),
        ("understanding-06".into(), UnderstandingFailure, 0.75),
        ("understanding-07".into(), UnderstandingFailure, 0.6),
        ("understanding-08".into(), PlanningFailure, 0.5),
        ("understanding-09".into(), IterativeRefinementFailure, 0.7),
    ];
    for i in 1..=16u32 {
        let confidence = f64::from(84 + (i * 7) % 14) / 100.0;
        rows.push((format!("iterative-refinement-{i:02}"), IterativeRefinementFailure, confidence));
    }
    rows.push(("iterative-refinement-17".into(), UnderstandingFailure, 0.85));
    rows.push(("iterative-refinement-18".into(), IterativeRefinementFailure, 0.78));

    rows.into_iter()
        .map(|(trace_id, category, confidence)| PredictionRecord {
            annotation: Annotation::new(
                category,
                confidence,
                format!("predicted {} for {trace_id}", category.as_str()),
                AnnotationSource::Llm,
            )
            .expect("confidences are in range"),
            trace_id,
        })
        .collect()
}

/// Writes `gold.json` and `predictions.json` for the counted evaluation fixture.
pub fn write_reference_eval_fixture(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let gold: Vec<GoldRecord> = generate_reference_corpus().into_iter().map(|c| c.gold).collect();
    write_file(&dir.join("gold.json"), &to_pretty_json(&gold))?;
    write_file(&dir.join("predictions.json"), &to_pretty_json(&reference_predictions()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::classify_rule_based;
    use crate::features::extract_features;
    use crate::trace::validate_trace;

    fn spec(kind: FixtureKind, limit: u32, seed: u64) -> FixtureSpec {
        FixtureSpec {
            kind,
            scenario: ScenarioConfig {
                iteration_limit: limit,
                prompt_quality: PromptQuality::Basic,
                tool_availability: ToolAvailability::Full,
                task_difficulty: TaskDifficulty::Medium,
            },
            seed,
        }
    }

    #[test]
    fn every_kind_and_limit_is_valid() {
        for kind in FixtureKind::ALL {
            for limit in ITERATION_LIMITS {
                for seed in 0..5 {
                    let t = generate_trace(&spec(kind, limit, seed));
                    assert_eq!(validate_trace(&t), vec![], "{kind:?} limit {limit} seed {seed}");
                    assert_eq!(t.is_failure(), kind != FixtureKind::Success);
                }
            }
        }
    }

    #[test]
    fn iterative_fixture_hits_limit() {
        let t = generate_trace(&spec(
            FixtureKind::Failure(FailureCategory::IterativeRefinementFailure),
            2,
            7,
        ));
        let f = extract_features(&t).unwrap();
        assert!(f.hit_iteration_limit);
        assert!(!f.recovery_attempted_after_error);
    }

    #[test]
    fn success_fixture() {
        let t = generate_trace(&spec(FixtureKind::Success, 5, 1));
        assert_eq!(t.outcome.status, OutcomeStatus::Success);
        assert!(validate_trace(&t).is_empty());
        assert!(extract_features(&t).unwrap().validation_tool_invoked);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(FixtureKind::Failure(FailureCategory::UnderstandingFailure), 5, 42);
        assert_eq!(generate_trace(&s).to_json(), generate_trace(&s).to_json());
        let other = FixtureSpec { seed: 43, ..s };
        assert_ne!(generate_trace(&s).to_json(), generate_trace(&other).to_json());
    }

    #[test]
    fn rule_engine_recovers_r1_r2_and_structural_templates() {
        for limit in ITERATION_LIMITS {
            for seed in 0..10 {
                for category in [
                    FailureCategory::IterativeRefinementFailure,
                    FailureCategory::TestingValidationFailure,
                ] {
                    let t = generate_trace(&spec(FixtureKind::Failure(category), limit, seed));
                    let a = classify_rule_based(&extract_features(&t).unwrap()).unwrap();
                    assert_eq!(a.category, category, "limit {limit} seed {seed}");
                }
            }
        }
        for limit in [2, 5, 10] {
            for category in [
                FailureCategory::CodeGenerationFailure,
                FailureCategory::UnderstandingFailure,
            ] {
                let t = generate_trace(&spec(FixtureKind::Failure(category), limit, 3));
                let a = classify_rule_based(&extract_features(&t).unwrap()).unwrap();
                assert_eq!(a.category, category);
            }
        }
    }

    #[test]
    fn corpus_matches_reference_counts() {
        let corpus = generate_reference_corpus();
        assert_eq!(corpus.len(), 32);
        for (category, count) in CORPUS_COUNTS {
            assert_eq!(corpus.iter().filter(|c| c.gold.category == category).count(), count);
        }
        let mut ids: Vec<&str> = corpus.iter().map(|c| c.trace.trace_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 32);
        assert!(corpus.iter().all(|c| validate_trace(&c.trace).is_empty()));
    }

    #[test]
    fn prediction_fixture_counts() {
        let preds = reference_predictions();
        let corpus = generate_reference_corpus();
        assert_eq!(preds.len(), 32);
        let gold = |id: &str| corpus.iter().find(|c| c.trace.trace_id == id).unwrap().gold.category;
        let correct = preds.iter().filter(|p| p.annotation.category == gold(&p.trace_id)).count();
        let high: Vec<_> = preds.iter().filter(|p| p.annotation.confidence > 0.8).collect();
        let high_correct = high.iter().filter(|p| p.annotation.category == gold(&p.trace_id)).count();
        assert_eq!((correct, high.len(), high_correct), (26, 21, 19));
    }

    #[test]
    fn fixture_kind_serialization() {
        assert_eq!(serde_json::to_string(&FixtureKind::Success).unwrap(), "\"success\"");
        assert_eq!(
            serde_json::to_string(&FixtureKind::Failure(FailureCategory::PlanningFailure)).unwrap(),
            "\"planning_failure\""
        );
        let back: FixtureKind = serde_json::from_str("\"understanding_failure\"").unwrap();
        assert_eq!(back, FixtureKind::Failure(FailureCategory::UnderstandingFailure));
    }
}
