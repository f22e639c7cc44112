//! Structured failure explanations: root cause, failure mechanism, scenario
//! context, and a counterfactual.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classifier::complete_with_repair;
use crate::error::Error;
use crate::features::{FeatureVector, DEFAULT_VALIDATION_TOOLS};
use crate::prompt;
use crate::provider::{StructuredClient, StructuredRequest};
use crate::taxonomy::{Annotation, FailureCategory};
use crate::trace::{ExecutionTrace, PromptQuality, ScenarioConfig, ToolAvailability};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationSource {
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub root_cause: String,
    pub failure_mechanism: String,
    pub context_integration: String,
    pub counterfactual: String,
    pub source: ExplanationSource,
    /// Why the LLM explanation was abandoned, when a template was used instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

impl Explanation {
    pub fn sections(&self) -> [(&'static str, &str); 4] {
        [
            ("root_cause", &self.root_cause),
            ("failure_mechanism", &self.failure_mechanism),
            ("context_integration", &self.context_integration),
            ("counterfactual", &self.counterfactual),
        ]
    }

    pub fn is_complete(&self) -> bool {
        self.sections().iter().all(|(_, text)| !text.trim().is_empty())
    }
}

/// Iteration limit the counterfactual for an exhausted budget proposes.
pub fn suggested_iteration_limit(current: u32) -> u32 {
    current.saturating_add(3).max(5)
}

/// Whether the scenario itself plausibly caused this category of failure.
fn configuration_constrained(category: FailureCategory, s: &ScenarioConfig) -> Option<String> {
    use FailureCategory::*;
    match category {
        IterativeRefinementFailure if s.iteration_limit < 5 => Some(format!(
            "an iteration limit of {} is below the 5-10 range typical problems need, so the \
             budget ran out while the agent was still recovering",
            s.iteration_limit
        )),
        PlanningFailure | UnderstandingFailure
            if matches!(s.prompt_quality, PromptQuality::Minimal | PromptQuality::Basic) =>
        {
            Some(format!(
                "the {} prompt offered no worked examples or decomposition guidance",
                s.prompt_quality.as_str()
            ))
        }
        TestingValidationFailure if s.tool_availability != ToolAvailability::Full => Some(format!(
            "{} tool availability may have left validation tooling out of reach",
            s.tool_availability.as_str()
        )),
        _ => None,
    }
}

fn plural(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

pub fn explain_template(
    trace: &ExecutionTrace,
    features: &FeatureVector,
    annotation: &Annotation,
) -> Explanation {
    let s = &trace.scenario;
    let category = annotation.category;
    let name = format!("{} ({})", category.display_name(), category.as_str());
    let used = trace.outcome.iterations_used;
    let limit = s.iteration_limit;
    let last_error = features.last_error_type.as_deref().unwrap_or("unknown");
    let tool_calls = trace.messages.iter().filter(|m| m.is_tool_call()).count();
    let last_error_index = trace.errors.iter().map(|e| e.message_index).max();
    let output_note = if features.produced_final_output {
        "submitted a final output that did not solve the task"
    } else {
        "ended without a usable final output"
    };
    let errors_note = if features.error_count == 0 {
        "no errors were raised".to_string()
    } else {
        format!(
            "{} of {} were raised, the last being {last_error}",
            plural(features.error_count, "error", "errors"),
            plural(features.distinct_error_types, "type", "types")
        )
    };

    let (root_cause, failure_mechanism, counterfactual) = match category {
        FailureCategory::IterativeRefinementFailure => (
            format!(
                "{name}: the agent used {used} of its {limit} allowed iterations and stopped \
                 with a {last_error} error still unresolved."
            ),
            format!(
                "Across {} the agent kept producing failing attempts; {errors_note}{}. {}{}",
                plural(features.iteration_count as usize, "iteration", "iterations"),
                last_error_index
                    .map(|i| format!(" at message {i}"))
                    .unwrap_or_default(),
                if features.recovery_attempted_after_error {
                    "A recovery attempt followed the last error but did not converge."
                } else {
                    "No recovery attempt followed the final error."
                },
                if features.repeated_tool_call_loop {
                    " The agent repeated an identical tool call at least three times in a row, \
                     an unproductive loop."
                } else {
                    ""
                }
            ),
            format!(
                "With iteration_limit raised to {} the final error-recovery sequence could complete.",
                suggested_iteration_limit(limit)
            ),
        ),
        FailureCategory::TestingValidationFailure => (
            format!(
                "{name}: the agent finalized its answer without running any validation tests."
            ),
            format!(
                "None of the {} invoked a validation tool ({}); {errors_note}, and the agent {output_note} \
                 without ever checking it.",
                plural(tool_calls, "tool call", "tool calls"),
                DEFAULT_VALIDATION_TOOLS.join(", ")
            ),
            "Had the validation tool been invoked before finalizing, the wrong output would have \
             been caught."
                .to_string(),
        ),
        FailureCategory::CodeGenerationFailure => (
            format!(
                "{name}: the agent produced a complete solution, but the implementation logic \
                 is wrong."
            ),
            format!(
                "The run took {} and {errors_note}; {}. The defect lies in the generated logic \
                 rather than in execution.",
                plural(used as usize, "iteration", "iterations"),
                if features.validation_tool_invoked {
                    "the validation that did run was too weak to expose it"
                } else {
                    "no validation was run against it"
                }
            ),
            "Had the implementation been checked against tests covering the task's edge cases, \
             the logic error would have surfaced before submission."
                .to_string(),
        ),
        FailureCategory::UnderstandingFailure => (
            format!(
                "{name}: the agent worked toward a different problem than the one specified \
                 in the task."
            ),
            format!(
                "The agent's work diverged from the stated requirements: {errors_note}, and it {output_note}."
            ),
            "Had the agent restated the requirements and checked them against the task's \
             examples before writing code, the misreading would have been caught."
                .to_string(),
        ),
        FailureCategory::PlanningFailure => (
            format!(
                "{name}: the agent decomposed the problem incorrectly, so its plan could not \
                 produce a working solution."
            ),
            format!(
                "The agent committed to a plan and executed {} before stopping; {errors_note}, \
                 and it {output_note} with planned steps left incomplete.",
                plural(tool_calls, "tool call", "tool calls")
            ),
            "Had the plan been split into verifiable steps, each executed and checked in turn, \
             the missing step would have been exposed."
                .to_string(),
        ),
    };

    let mut context_integration = format!(
        "Scenario: iteration limit {limit} ({used} used), {} prompt quality, {} tool availability, \
         {} task. ",
        s.prompt_quality.as_str(),
        s.tool_availability.as_str(),
        s.task_difficulty.as_str()
    );
    match configuration_constrained(category, s) {
        Some(reason) => {
            context_integration.push_str(&format!(
                "This points to a configuration constraint: {reason}."
            ));
        }
        None => context_integration.push_str(
            "The configuration was not unusually restrictive for this failure mode, which points \
             to an agent limitation.",
        ),
    }

    Explanation {
        root_cause,
        failure_mechanism,
        context_integration,
        counterfactual,
        source: ExplanationSource::Template,
        fallback_reason: None,
    }
}

pub fn explanation_schema() -> Value {
    let section = |description: &str| json!({"type": "string", "minLength": 1, "description": description});
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "explain_failure",
        "description": "Structured explanation of a classified coding-agent failure.",
        "type": "object",
        "properties": {
            "root_cause": section("The fundamental reason for the failure, grounded in the classification."),
            "failure_mechanism": section("How the failure manifested in this run, citing intermediate steps and decision points."),
            "context_integration": section("Whether scenario settings (iteration limit, prompt quality, tools) or the agent itself caused the failure."),
            "counterfactual": section("The minimal change that would plausibly have led to success.")
        },
        "required": ["root_cause", "failure_mechanism", "context_integration", "counterfactual"],
        "additionalProperties": false
    })
}

const EXPLAINER_SYSTEM: &str = "You explain failures of an LLM coding agent to developers. \
Write concise, concrete prose grounded in the trace. Answer only by calling the provided function.";

pub fn explanation_request(
    trace: &ExecutionTrace,
    features: &FeatureVector,
    annotation: &Annotation,
) -> Result<StructuredRequest, Error> {
    let excerpt = prompt::trace_excerpt(trace, prompt::EXCERPT_BUDGET)?;
    let user = format!(
        "## Task\n{task}\n\n## Classification\n{annotation}\n\n## Scenario\n{scenario}\n\n\
         ## Extracted features\n{features}\n\n## Errors\n{errors}\n\n## Trace excerpt\n{excerpt}\n\n\
         Explain this failure.",
        task = trace.task_description,
        annotation = prompt::annotation_block(annotation),
        scenario = prompt::scenario_block(&trace.scenario),
        features = prompt::features_block(features),
        errors = prompt::errors_block(trace),
    );
    Ok(StructuredRequest::new(EXPLAINER_SYSTEM, user, explanation_schema()))
}

fn explanation_from_payload(payload: Value) -> Result<Explanation, String> {
    let field = |key: &str| -> Result<String, String> {
        let text = payload[key].as_str().unwrap_or_default().trim();
        if text.is_empty() {
            Err(format!("{key} is empty"))
        } else {
            Ok(text.to_string())
        }
    };
    Ok(Explanation {
        root_cause: field("root_cause")?,
        failure_mechanism: field("failure_mechanism")?,
        context_integration: field("context_integration")?,
        counterfactual: field("counterfactual")?,
        source: ExplanationSource::Llm,
        fallback_reason: None,
    })
}

pub fn explain_llm(
    trace: &ExecutionTrace,
    features: &FeatureVector,
    annotation: &Annotation,
    client: &StructuredClient,
) -> Result<Explanation, Error> {
    let request = explanation_request(trace, features, annotation)?;
    Ok(complete_with_repair(client, request, explanation_from_payload)?)
}

/// LLM explanation when a client is given, falling back to the template on
/// any failure with the reason recorded on the result.
pub fn explain(
    trace: &ExecutionTrace,
    features: &FeatureVector,
    annotation: &Annotation,
    client: Option<&StructuredClient>,
) -> Explanation {
    let Some(client) = client else {
        return explain_template(trace, features, annotation);
    };
    match explain_llm(trace, features, annotation, client) {
        Ok(explanation) => explanation,
        Err(err) => {
            log::warn!("LLM explanation failed ({err}); using template");
            Explanation {
                fallback_reason: Some(format!("{}: {err}", err.code())),
                ..explain_template(trace, features, annotation)
            }
        }
    }
}
