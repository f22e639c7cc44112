//! Classification features extracted from a validated trace.
//!
//! The "execution pattern" signals (tool-call loops, recovery after the last
//! error, the kind of the final event) are a concrete operationalization of
//! pattern-based evidence; they are structural and never look at code content.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::trace::{
    count_iterations, validate_trace, ExecutionTrace, OutcomeStatus, Role, TaskDifficulty,
};

/// Consecutive identical tool calls at which a run is considered looping.
pub const LOOP_THRESHOLD: usize = 3;

pub const DEFAULT_VALIDATION_TOOLS: [&str; 3] = ["run_tests", "validate", "check_solution"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AgentMessage,
    ToolResult,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub iteration_count: u32,
    pub hit_iteration_limit: bool,
    pub error_count: usize,
    pub distinct_error_types: usize,
    pub last_error_type: Option<String>,
    pub validation_tool_invoked: bool,
    pub recovery_attempted_after_error: bool,
    pub repeated_tool_call_loop: bool,
    pub last_event_kind: EventKind,
    pub produced_final_output: bool,
    pub task_difficulty: TaskDifficulty,
    pub outcome_status: OutcomeStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureConfig {
    pub validation_tools: BTreeSet<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            validation_tools: DEFAULT_VALIDATION_TOOLS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn extract_features(trace: &ExecutionTrace) -> Result<FeatureVector, Error> {
    extract_features_with(trace, &FeatureConfig::default())
}

pub fn extract_features_with(
    trace: &ExecutionTrace,
    config: &FeatureConfig,
) -> Result<FeatureVector, Error> {
    let violations = validate_trace(trace);
    if !violations.is_empty() {
        return Err(Error::InvalidTrace(violations));
    }

    // Ties on message_index are broken by error_type so the result does not
    // depend on the order of the error list.
    let last_error = trace
        .errors
        .iter()
        .max_by(|a, b| {
            a.message_index
                .cmp(&b.message_index)
                .then_with(|| a.error_type.cmp(&b.error_type))
        });
    let distinct_error_types = trace
        .errors
        .iter()
        .map(|e| e.error_type.as_str())
        .collect::<BTreeSet<_>>()
        .len();
    let recovery_attempted_after_error = last_error.is_some_and(|err| {
        trace
            .messages
            .iter()
            .any(|m| m.role == Role::Agent && m.index > err.message_index)
    });

    let validation_tool_invoked = trace.messages.iter().any(|m| {
        m.tool_call_name
            .as_deref()
            .is_some_and(|name| config.validation_tools.contains(name))
    });

    let last_message = trace.messages.last().expect("validated trace has messages");
    let last_event_kind = if last_error.is_some_and(|e| e.message_index == last_message.index) {
        EventKind::Error
    } else if last_message.role == Role::Tool {
        EventKind::ToolResult
    } else {
        EventKind::AgentMessage
    };

    Ok(FeatureVector {
        iteration_count: count_iterations(&trace.messages),
        hit_iteration_limit: trace.outcome.iterations_used >= trace.scenario.iteration_limit,
        error_count: trace.errors.len(),
        distinct_error_types,
        last_error_type: last_error.map(|e| e.error_type.clone()),
        validation_tool_invoked,
        recovery_attempted_after_error,
        repeated_tool_call_loop: has_tool_call_loop(trace),
        last_event_kind,
        produced_final_output: trace
            .outcome
            .final_output
            .as_deref()
            .is_some_and(|o| !o.trim().is_empty()),
        task_difficulty: trace.scenario.task_difficulty,
        outcome_status: trace.outcome.status,
    })
}

/// True when the sequence of tool calls contains a run of at least
/// [`LOOP_THRESHOLD`] calls with identical name and arguments.
fn has_tool_call_loop(trace: &ExecutionTrace) -> bool {
    let calls: Vec<(&str, Option<&str>)> = trace
        .messages
        .iter()
        .filter_map(|m| {
            m.tool_call_name
                .as_deref()
                .map(|name| (name, m.tool_call_args.as_deref()))
        })
        .collect();
    let mut run = 0;
    for (i, call) in calls.iter().enumerate() {
        run = if i > 0 && calls[i - 1] == *call { run + 1 } else { 1 };
        if run >= LOOP_THRESHOLD {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::tests::{call, minimal, msg, result};
    use crate::trace::ErrorRecord;

    fn error_at(index: usize, kind: &str) -> ErrorRecord {
        ErrorRecord {
            error_type: kind.into(),
            message: format!("{kind} raised"),
            stack_trace: None,
            message_index: index,
        }
    }

    /// human, call, error result, retry call, error result; limit 2, used 2.
    fn exhausted_trace() -> ExecutionTrace {
        let mut t = minimal();
        t.outcome.status = OutcomeStatus::Failure;
        t.messages.extend([
            call(1, "run_code", "v1"),
            result(2, 1, "SyntaxError"),
            call(3, "run_code", "v2"),
            result(4, 3, "NameError"),
        ]);
        t.errors = vec![error_at(2, "SyntaxError"), error_at(4, "NameError")];
        t.outcome.iterations_used = 2;
        t
    }

    #[test]
    fn exhausted_budget_with_unresolved_error() {
        let f = extract_features(&exhausted_trace()).unwrap();
        assert!(f.hit_iteration_limit);
        assert!(!f.recovery_attempted_after_error);
        assert_eq!(f.error_count, 2);
        assert_eq!(f.distinct_error_types, 2);
        assert_eq!(f.last_error_type.as_deref(), Some("NameError"));
        assert_eq!(f.last_event_kind, EventKind::Error);
        assert_eq!(f.iteration_count, 2);
        assert!(!f.validation_tool_invoked);
        assert!(!f.repeated_tool_call_loop);
    }

    #[test]
    fn clean_success() {
        let mut t = minimal();
        t.messages.push(msg(1, Role::Agent, "def f(): ..."));
        t.outcome.final_output = Some("def f(): ...".into());
        t.outcome.iterations_used = 1;
        let f = extract_features(&t).unwrap();
        assert_eq!(f.error_count, 0);
        assert_eq!(f.last_error_type, None);
        assert!(!f.recovery_attempted_after_error);
        assert!(f.produced_final_output);
        assert_eq!(f.last_event_kind, EventKind::AgentMessage);
    }

    #[test]
    fn identical_consecutive_calls_form_a_loop() {
        let mut t = minimal();
        t.scenario.iteration_limit = 5;
        t.messages.extend([
            call(1, "run_code", "same"),
            result(2, 1, "x"),
            call(3, "run_code", "same"),
            result(4, 3, "x"),
            call(5, "run_code", "same"),
            result(6, 5, "x"),
        ]);
        t.outcome.iterations_used = 3;
        let f = extract_features(&t).unwrap();
        assert!(f.repeated_tool_call_loop);
        assert_eq!(f.last_event_kind, EventKind::ToolResult);

        t.messages[5].tool_call_args = Some("different".into());
        assert!(!extract_features(&t).unwrap().repeated_tool_call_loop);
    }

    #[test]
    fn recovery_and_validation_detection() {
        let mut t = exhausted_trace();
        t.scenario.iteration_limit = 3;
        t.messages.push(call(5, "run_tests", "v3"));
        t.outcome.iterations_used = 3;
        let f = extract_features(&t).unwrap();
        assert!(f.recovery_attempted_after_error);
        assert!(f.validation_tool_invoked);
        assert_eq!(f.last_event_kind, EventKind::AgentMessage);

        let cfg = FeatureConfig {
            validation_tools: ["pytest".to_string()].into_iter().collect(),
        };
        assert!(!extract_features_with(&t, &cfg).unwrap().validation_tool_invoked);
    }

    #[test]
    fn error_order_does_not_matter() {
        let mut t = exhausted_trace();
        t.errors.push(error_at(4, "AssertionError"));
        let base = extract_features(&t).unwrap();
        t.errors.reverse();
        assert_eq!(extract_features(&t).unwrap(), base);
        assert_eq!(base.last_error_type.as_deref(), Some("NameError"));
    }

    #[test]
    fn invalid_trace_is_rejected() {
        let mut t = minimal();
        t.trace_id.clear();
        assert!(matches!(extract_features(&t), Err(Error::InvalidTrace(_))));
    }
}
