//! Execution trace data model, parsing, and validation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const TRACE_SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptQuality {
    Minimal,
    Basic,
    Detailed,
    Comprehensive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolAvailability {
    Full,
    Limited,
    Minimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskDifficulty {
    Easy,
    Medium,
    Hard,
}

impl PromptQuality {
    pub const ALL: [PromptQuality; 4] = [
        PromptQuality::Minimal,
        PromptQuality::Basic,
        PromptQuality::Detailed,
        PromptQuality::Comprehensive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptQuality::Minimal => "minimal",
            PromptQuality::Basic => "basic",
            PromptQuality::Detailed => "detailed",
            PromptQuality::Comprehensive => "comprehensive",
        }
    }
}

impl ToolAvailability {
    pub const ALL: [ToolAvailability; 3] = [
        ToolAvailability::Full,
        ToolAvailability::Limited,
        ToolAvailability::Minimal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolAvailability::Full => "full",
            ToolAvailability::Limited => "limited",
            ToolAvailability::Minimal => "minimal",
        }
    }
}

impl TaskDifficulty {
    pub const ALL: [TaskDifficulty; 3] = [
        TaskDifficulty::Easy,
        TaskDifficulty::Medium,
        TaskDifficulty::Hard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskDifficulty::Easy => "easy",
            TaskDifficulty::Medium => "medium",
            TaskDifficulty::Hard => "hard",
        }
    }
}

/// The experimental knobs a run was executed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub iteration_limit: u32,
    pub prompt_quality: PromptQuality,
    pub tool_availability: ToolAvailability,
    pub task_difficulty: TaskDifficulty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Human,
    Agent,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Human => "human",
            Role::Agent => "agent",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub index: usize,
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_args: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responds_to: Option<usize>,
}

impl MessageRecord {
    pub fn is_tool_call(&self) -> bool {
        self.tool_call_name.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error_type: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack_trace: Option<String>,
    pub message_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Success,
    Failure,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeStatus::Success => "success",
            OutcomeStatus::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub status: OutcomeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_output: Option<String>,
    pub iterations_used: u32,
    pub wall_time_seconds: f64,
}

/// One complete agent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub schema_version: String,
    pub trace_id: String,
    pub task_description: String,
    pub scenario: ScenarioConfig,
    pub messages: Vec<MessageRecord>,
    pub errors: Vec<ErrorRecord>,
    pub outcome: OutcomeRecord,
}

/// How unknown keys in a trace document are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug)]
pub struct ParsedTrace {
    pub trace: ExecutionTrace,
    /// Paths of keys that were ignored (lenient mode only).
    pub ignored_keys: Vec<String>,
}

impl ExecutionTrace {
    /// Parses a trace document. Strict mode rejects unknown keys; lenient mode
    /// ignores them and reports each one in `ignored_keys`.
    pub fn from_json(text: &str, mode: ParseMode) -> Result<ParsedTrace, Error> {
        let mut ignored = Vec::new();
        let mut de = serde_json::Deserializer::from_str(text);
        let trace: ExecutionTrace =
            serde_ignored::deserialize(&mut de, |path| ignored.push(path.to_string()))
                .map_err(|e| Error::Parse(e.to_string()))?;
        de.end().map_err(|e| Error::Parse(e.to_string()))?;
        if mode == ParseMode::Strict && !ignored.is_empty() {
            return Err(Error::Parse(format!(
                "unknown keys in trace document: {}",
                ignored.join(", ")
            )));
        }
        for key in &ignored {
            log::warn!("ignoring unknown trace key `{key}`");
        }
        Ok(ParsedTrace {
            trace,
            ignored_keys: ignored,
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("trace serializes");
        text.push('\n');
        text
    }

    pub fn is_failure(&self) -> bool {
        self.outcome.status == OutcomeStatus::Failure
    }

    pub fn message(&self, index: usize) -> Option<&MessageRecord> {
        self.messages.iter().find(|m| m.index == index)
    }
}

/// Counts agent iterations: every agent message that initiates a tool call,
/// plus the final agent message when it carries no tool call (the answer).
pub fn count_iterations(messages: &[MessageRecord]) -> u32 {
    let tool_calls = messages
        .iter()
        .filter(|m| m.role == Role::Agent && m.is_tool_call())
        .count();
    let final_answer = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::Agent)
        .is_some_and(|m| !m.is_tool_call());
    (tool_calls + usize::from(final_answer)) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    UnsupportedSchemaVersion,
    EmptyTraceId,
    IterationLimitZero,
    NoMessages,
    FirstMessageNotHuman,
    IndicesNotZeroBased,
    GapInIndices,
    NonIncreasingIndices,
    ToolResultMissingRespondsTo,
    ToolResultBadReference,
    ToolCallNotAgent,
    EmptyErrorType,
    ErrorIndexOutOfRange,
    IterationsExceedLimit,
    InvalidWallTime,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::UnsupportedSchemaVersion => "UNSUPPORTED_SCHEMA_VERSION",
            ViolationCode::EmptyTraceId => "EMPTY_TRACE_ID",
            ViolationCode::IterationLimitZero => "ITERATION_LIMIT_ZERO",
            ViolationCode::NoMessages => "NO_MESSAGES",
            ViolationCode::FirstMessageNotHuman => "FIRST_MESSAGE_NOT_HUMAN",
            ViolationCode::IndicesNotZeroBased => "INDICES_NOT_ZERO_BASED",
            ViolationCode::GapInIndices => "GAP_IN_INDICES",
            ViolationCode::NonIncreasingIndices => "NON_INCREASING_INDICES",
            ViolationCode::ToolResultMissingRespondsTo => "TOOL_RESULT_MISSING_RESPONDS_TO",
            ViolationCode::ToolResultBadReference => "TOOL_RESULT_BAD_REFERENCE",
            ViolationCode::ToolCallNotAgent => "TOOL_CALL_NOT_AGENT",
            ViolationCode::EmptyErrorType => "EMPTY_ERROR_TYPE",
            ViolationCode::ErrorIndexOutOfRange => "ERROR_INDEX_OUT_OF_RANGE",
            ViolationCode::IterationsExceedLimit => "ITERATIONS_EXCEED_LIMIT",
            ViolationCode::InvalidWallTime => "INVALID_WALL_TIME",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// JSON-pointer-like path to the offending field, e.g. `messages[3].responds_to`.
    pub path: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.detail)
    }
}

/// Checks every structural invariant of a trace. An empty list means valid.
pub fn validate_trace(trace: &ExecutionTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, path: String, detail: String| {
        out.push(Violation { code, path, detail })
    };

    if trace.schema_version != TRACE_SCHEMA_VERSION {
        push(
            ViolationCode::UnsupportedSchemaVersion,
            "schema_version".into(),
            format!(
                "expected \"{TRACE_SCHEMA_VERSION}\", found \"{}\"",
                trace.schema_version
            ),
        );
    }
    if trace.trace_id.trim().is_empty() {
        push(
            ViolationCode::EmptyTraceId,
            "trace_id".into(),
            "trace_id must be non-empty".into(),
        );
    }
    if trace.scenario.iteration_limit == 0 {
        push(
            ViolationCode::IterationLimitZero,
            "scenario.iteration_limit".into(),
            "iteration_limit must be at least 1".into(),
        );
    }

    match trace.messages.first() {
        None => push(
            ViolationCode::NoMessages,
            "messages".into(),
            "trace has no messages".into(),
        ),
        Some(first) => {
            if first.role != Role::Human {
                push(
                    ViolationCode::FirstMessageNotHuman,
                    "messages[0].role".into(),
                    format!("first message must be human, found {}", first.role.as_str()),
                );
            }
            if first.index != 0 {
                push(
                    ViolationCode::IndicesNotZeroBased,
                    "messages[0].index".into(),
                    format!("first index must be 0, found {}", first.index),
                );
            }
        }
    }
    for (pos, pair) in trace.messages.windows(2).enumerate() {
        let (prev, cur) = (pair[0].index, pair[1].index);
        let path = format!("messages[{}].index", pos + 1);
        if cur <= prev {
            push(
                ViolationCode::NonIncreasingIndices,
                path,
                format!("index {cur} does not follow {prev}"),
            );
        } else if cur > prev + 1 {
            push(
                ViolationCode::GapInIndices,
                path,
                format!("index jumps from {prev} to {cur}"),
            );
        }
    }

    let indices: BTreeSet<usize> = trace.messages.iter().map(|m| m.index).collect();
    for (pos, msg) in trace.messages.iter().enumerate() {
        if msg.is_tool_call() && msg.role != Role::Agent {
            push(
                ViolationCode::ToolCallNotAgent,
                format!("messages[{pos}].tool_call_name"),
                format!("tool call issued by a {} message", msg.role.as_str()),
            );
        }
        if msg.role == Role::Tool {
            match msg.responds_to {
                None => push(
                    ViolationCode::ToolResultMissingRespondsTo,
                    format!("messages[{pos}].responds_to"),
                    "tool result does not reference its call".into(),
                ),
                Some(target) => {
                    let ok = target < msg.index
                        && trace
                            .message(target)
                            .is_some_and(|t| t.tool_call_name.is_some());
                    if !ok {
                        push(
                            ViolationCode::ToolResultBadReference,
                            format!("messages[{pos}].responds_to"),
                            format!("message {target} is not an earlier tool call"),
                        );
                    }
                }
            }
        }
    }

    for (pos, err) in trace.errors.iter().enumerate() {
        if err.error_type.trim().is_empty() {
            push(
                ViolationCode::EmptyErrorType,
                format!("errors[{pos}].error_type"),
                "error_type must be non-empty".into(),
            );
        }
        if !indices.contains(&err.message_index) {
            push(
                ViolationCode::ErrorIndexOutOfRange,
                format!("errors[{pos}].message_index"),
                format!("no message with index {}", err.message_index),
            );
        }
    }

    if trace.outcome.iterations_used > trace.scenario.iteration_limit {
        push(
            ViolationCode::IterationsExceedLimit,
            "outcome.iterations_used".into(),
            format!(
                "{} iterations used with a limit of {}",
                trace.outcome.iterations_used, trace.scenario.iteration_limit
            ),
        );
    }
    let wall = trace.outcome.wall_time_seconds;
    if !wall.is_finite() || wall < 0.0 {
        push(
            ViolationCode::InvalidWallTime,
            "outcome.wall_time_seconds".into(),
            format!("wall time must be a non-negative number, found {wall}"),
        );
    }

    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn scenario(limit: u32) -> ScenarioConfig {
        ScenarioConfig {
            iteration_limit: limit,
            prompt_quality: PromptQuality::Basic,
            tool_availability: ToolAvailability::Full,
            task_difficulty: TaskDifficulty::Medium,
        }
    }

    pub(crate) fn msg(index: usize, role: Role, content: &str) -> MessageRecord {
        MessageRecord {
            index,
            role,
            content: content.into(),
            tool_call_name: None,
            tool_call_args: None,
            responds_to: None,
        }
    }

    pub(crate) fn call(index: usize, name: &str, args: &str) -> MessageRecord {
        MessageRecord {
            tool_call_name: Some(name.into()),
            tool_call_args: Some(args.into()),
            ..msg(index, Role::Agent, &format!("calling {name}"))
        }
    }

    pub(crate) fn result(index: usize, responds_to: usize, content: &str) -> MessageRecord {
        MessageRecord {
            responds_to: Some(responds_to),
            ..msg(index, Role::Tool, content)
        }
    }

    pub(crate) fn minimal() -> ExecutionTrace {
        ExecutionTrace {
            schema_version: TRACE_SCHEMA_VERSION.into(),
            trace_id: "t-min".into(),
            task_description: "reverse a string".into(),
            scenario: scenario(2),
            messages: vec![msg(0, Role::Human, "reverse a string")],
            errors: vec![],
            outcome: OutcomeRecord {
                status: OutcomeStatus::Success,
                final_output: None,
                iterations_used: 0,
                wall_time_seconds: 0.5,
            },
        }
    }

    fn codes(trace: &ExecutionTrace) -> Vec<ViolationCode> {
        validate_trace(trace).into_iter().map(|v| v.code).collect()
    }

    #[test]
    fn minimal_trace_is_valid() {
        assert!(validate_trace(&minimal()).is_empty());
    }

    #[test]
    fn gap_in_indices() {
        let mut t = minimal();
        t.messages.push(msg(2, Role::Agent, "answer"));
        assert_eq!(codes(&t), vec![ViolationCode::GapInIndices]);
    }

    #[test]
    fn iterations_exceed_limit() {
        let mut t = minimal();
        t.outcome.iterations_used = 5;
        assert_eq!(codes(&t), vec![ViolationCode::IterationsExceedLimit]);
    }

    #[test]
    fn tool_result_must_reference_a_call() {
        let mut t = minimal();
        t.messages.push(msg(1, Role::Agent, "thinking"));
        t.messages.push(result(2, 1, "output"));
        t.messages.push(msg(3, Role::Tool, "orphan"));
        assert_eq!(
            codes(&t),
            vec![
                ViolationCode::ToolResultBadReference,
                ViolationCode::ToolResultMissingRespondsTo
            ]
        );
    }

    #[test]
    fn tool_call_only_from_agent() {
        let mut t = minimal();
        t.messages[0].tool_call_name = Some("run_code".into());
        assert_eq!(codes(&t), vec![ViolationCode::ToolCallNotAgent]);
    }

    #[test]
    fn error_records_are_checked() {
        let mut t = minimal();
        t.errors.push(ErrorRecord {
            error_type: " ".into(),
            message: "boom".into(),
            stack_trace: None,
            message_index: 4,
        });
        assert_eq!(
            codes(&t),
            vec![ViolationCode::EmptyErrorType, ViolationCode::ErrorIndexOutOfRange]
        );
    }

    #[test]
    fn header_violations() {
        let mut t = minimal();
        t.schema_version = "0.9".into();
        t.trace_id.clear();
        t.scenario.iteration_limit = 0;
        t.messages[0].role = Role::Agent;
        t.outcome.wall_time_seconds = -1.0;
        let got = codes(&t);
        for code in [
            ViolationCode::UnsupportedSchemaVersion,
            ViolationCode::EmptyTraceId,
            ViolationCode::IterationLimitZero,
            ViolationCode::FirstMessageNotHuman,
            ViolationCode::InvalidWallTime,
        ] {
            assert!(got.contains(&code), "missing {code}");
        }
    }

    #[test]
    fn non_increasing_and_not_zero_based() {
        let mut t = minimal();
        t.messages[0].index = 1;
        t.messages.push(msg(1, Role::Agent, "again"));
        assert_eq!(
            codes(&t),
            vec![
                ViolationCode::IndicesNotZeroBased,
                ViolationCode::NonIncreasingIndices
            ]
        );
    }

    #[test]
    fn strict_rejects_unknown_keys_lenient_reports_them() {
        let mut value = serde_json::to_value(minimal()).unwrap();
        value["extra"] = serde_json::json!(1);
        value["messages"][0]["mood"] = serde_json::json!("happy");
        let text = value.to_string();
        assert!(matches!(
            ExecutionTrace::from_json(&text, ParseMode::Strict),
            Err(Error::Parse(_))
        ));
        let parsed = ExecutionTrace::from_json(&text, ParseMode::Lenient).unwrap();
        assert_eq!(parsed.trace, minimal());
        assert_eq!(parsed.ignored_keys.len(), 2);
        assert!(parsed.ignored_keys.iter().any(|k| k.contains("mood")));
    }

    #[test]
    fn json_round_trip() {
        let t = minimal();
        let parsed = ExecutionTrace::from_json(&t.to_json(), ParseMode::Strict).unwrap();
        assert_eq!(parsed.trace, t);
    }

    #[test]
    fn iteration_counting() {
        let mut t = minimal();
        assert_eq!(count_iterations(&t.messages), 0);
        t.messages.push(call(1, "run_code", "x"));
        t.messages.push(result(2, 1, "ok"));
        assert_eq!(count_iterations(&t.messages), 1);
        t.messages.push(msg(3, Role::Agent, "done"));
        assert_eq!(count_iterations(&t.messages), 2);
    }
}
