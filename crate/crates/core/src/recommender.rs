//! Tiered, rule-table-driven recommendations for a classified failure.

use serde::{Deserialize, Serialize};

use crate::explainer::suggested_iteration_limit;
use crate::features::FeatureVector;
use crate::taxonomy::{Annotation, FailureCategory};
use crate::trace::{PromptQuality, ScenarioConfig, TaskDifficulty, ToolAvailability};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    ImmediateFix,
    ContextSpecific,
    LongTerm,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::ImmediateFix, Tier::ContextSpecific, Tier::LongTerm];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::ImmediateFix => "immediate_fix",
            Tier::ContextSpecific => "context_specific",
            Tier::LongTerm => "long_term",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Tier::ImmediateFix => "Immediate fixes",
            Tier::ContextSpecific => "Context-specific guidance",
            Tier::LongTerm => "Long-term improvements",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub tier: Tier,
    pub text: String,
    pub rationale: String,
    pub category: FailureCategory,
}

pub const FEASIBILITY_CAVEAT: &str =
    "Feasibility caveat: this may not be practical in every deployment context.";

pub const RAISE_LIMIT_TEXT: &str = "Raise the iteration limit to the 5-10 range";
pub const MANDATE_VALIDATION_TEXT: &str =
    "Require running the validation tests before finalizing an answer";

type Entry = (Tier, &'static str, &'static str);

fn base_table(category: FailureCategory) -> &'static [Entry] {
    use Tier::*;
    match category {
        FailureCategory::IterativeRefinementFailure => &[
            (
                ImmediateFix,
                "Add explicit error-recovery instructions to the prompt: read the full error, fix its cause, re-run",
                "The agent stopped with an unresolved error; explicit recovery steps keep it from ending mid-repair.",
            ),
            (
                LongTerm,
                "Adopt adaptive iteration budgets that extend while the error count is still falling",
                "Fixed budgets cut off runs that are converging; adaptive limits spend iterations where progress is measurable.",
            ),
            (
                LongTerm,
                "Fine-tune on traces of successful error recovery in this domain",
                "Recovery skill, not budget alone, determines whether extra iterations turn into fixes.",
            ),
        ],
        FailureCategory::TestingValidationFailure => &[
            (
                ImmediateFix,
                MANDATE_VALIDATION_TEXT,
                "The run ended without executing any validation tool; the inverse action is to make test execution mandatory.",
            ),
            (
                ImmediateFix,
                "Expose the test runner in the agent's default tool set",
                "Validation that is not one call away tends to be skipped.",
            ),
            (
                LongTerm,
                "Enforce a validate-before-submit gate in the agent architecture",
                "A structural gate removes the reliance on the model remembering to test.",
            ),
        ],
        FailureCategory::CodeGenerationFailure => &[
            (
                ImmediateFix,
                "Ask the agent to enumerate edge cases and write tests for them before submitting",
                "The run was clean but the logic was wrong; targeted tests expose logic errors that smoke tests miss.",
            ),
            (
                LongTerm,
                "Extend the evaluation framework with property-based and edge-case test suites",
                "Clean runs with wrong output are only caught by stronger oracles.",
            ),
            (
                LongTerm,
                "Fine-tune on domain-specific code with verified solutions",
                "Logic errors on correct understanding point at generation quality.",
            ),
        ],
        FailureCategory::UnderstandingFailure => &[
            (
                ImmediateFix,
                "Have the agent restate the requirements and expected input/output before coding",
                "The agent solved a different problem; an explicit restatement makes divergence visible early.",
            ),
            (
                LongTerm,
                "Add a requirements-checking step that compares the plan against the task's examples",
                "Misreadings are cheapest to catch before any code is written.",
            ),
        ],
        FailureCategory::PlanningFailure => &[
            (
                ImmediateFix,
                "Require a numbered plan whose every step is executed and checked off",
                "Planned steps were left unexecuted; tracking each step closes that gap.",
            ),
            (
                LongTerm,
                "Introduce a separate planning stage that critiques the decomposition before execution",
                "Incorrect decompositions propagate into every later step.",
            ),
        ],
    }
}

pub fn recommend(
    annotation: &Annotation,
    features: &FeatureVector,
    scenario: &ScenarioConfig,
) -> Vec<Recommendation> {
    let category = annotation.category;
    let mut out: Vec<Recommendation> = Vec::new();
    let mut push = |tier: Tier, text: String, rationale: String| {
        if out.iter().any(|r| r.text == text) {
            return;
        }
        let rationale = if tier == Tier::LongTerm {
            format!("{rationale} {FEASIBILITY_CAVEAT}")
        } else {
            rationale
        };
        out.push(Recommendation {
            tier,
            text,
            rationale,
            category,
        });
    };

    for &(tier, text, rationale) in base_table(category) {
        push(tier, text.into(), rationale.into());
    }

    if category == FailureCategory::IterativeRefinementFailure && scenario.iteration_limit < 5 {
        push(
            Tier::ImmediateFix,
            format!(
                "{RAISE_LIMIT_TEXT} (e.g. {} instead of {})",
                suggested_iteration_limit(scenario.iteration_limit),
                scenario.iteration_limit
            ),
            "Coding agents need minimum iteration budgets of 5-10 for typical problems; limits of 1-2 \
             fail even when the initial approach is sound."
                .into(),
        );
    }
    if matches!(scenario.prompt_quality, PromptQuality::Minimal | PromptQuality::Basic)
        && matches!(
            category,
            FailureCategory::PlanningFailure | FailureCategory::UnderstandingFailure
        )
    {
        push(
            Tier::ImmediateFix,
            "Upgrade the prompt with worked examples and explicit problem-decomposition instructions"
                .into(),
            format!(
                "The run used a {} prompt; planning and understanding failures respond to richer prompting.",
                scenario.prompt_quality.as_str()
            ),
        );
    }
    if !features.validation_tool_invoked {
        push(
            Tier::ImmediateFix,
            MANDATE_VALIDATION_TEXT.into(),
            "No validation tool was called in this run.".into(),
        );
    }

    if let Some(err) = &features.last_error_type {
        if !features.recovery_attempted_after_error {
            push(
                Tier::ContextSpecific,
                format!("Add a recovery example for {err} errors to the prompt"),
                format!("The run ended on an unhandled {err}; a worked recovery shows the agent what to do next."),
            );
        }
    }
    if features.repeated_tool_call_loop {
        push(
            Tier::ContextSpecific,
            "Detect identical consecutive tool calls and force a change of approach".into(),
            "The agent repeated the same tool call with the same arguments at least three times.".into(),
        );
    }
    if scenario.tool_availability != ToolAvailability::Full {
        push(
            Tier::ContextSpecific,
            format!(
                "Review the {} tool set: make code execution and test running available",
                scenario.tool_availability.as_str()
            ),
            "Restricted tooling limits the agent's ability to check its own work.".into(),
        );
    }
    if scenario.task_difficulty == TaskDifficulty::Hard && scenario.iteration_limit < 10 {
        push(
            Tier::ContextSpecific,
            "Give hard tasks a larger iteration budget than easy ones".into(),
            format!(
                "This hard task ran with a limit of {}; complex tasks warrant adaptive limits.",
                scenario.iteration_limit
            ),
        );
    }

    // Stable: entries keep table order within a tier.
    out.sort_by_key(|r| r.tier);
    out
}
