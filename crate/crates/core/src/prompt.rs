//! Prompt text shared by the LLM classifier and explainer.

use std::fmt::Write;

use crate::error::Error;
use crate::features::FeatureVector;
use crate::taxonomy::{Annotation, FailureCategory};
use crate::trace::{ExecutionTrace, MessageRecord, ScenarioConfig};

/// Character budget for the message-history part of a prompt.
pub const EXCERPT_BUDGET: usize = 4000;

pub fn render_message(m: &MessageRecord) -> String {
    let mut line = format!("[{}] {}", m.index, m.role.as_str());
    if let Some(name) = &m.tool_call_name {
        let _ = write!(line, " -> {name}({})", m.tool_call_args.as_deref().unwrap_or(""));
    }
    if let Some(target) = m.responds_to {
        let _ = write!(line, " (result of [{target}])");
    }
    let _ = write!(line, ": {}", m.content);
    line
}

/// The tail of the message history that fits in `budget` characters.
///
/// When the trace has errors, everything from the message where the last
/// error surfaced onward must fit; otherwise [`Error::TraceTooLarge`] is
/// returned. Earlier messages are added whole while they fit.
pub fn trace_excerpt(trace: &ExecutionTrace, budget: usize) -> Result<String, Error> {
    let lines: Vec<String> = trace.messages.iter().map(render_message).collect();
    let len = |s: &String| s.chars().count();

    let anchor = trace
        .errors
        .iter()
        .map(|e| e.message_index)
        .max()
        .and_then(|idx| trace.messages.iter().position(|m| m.index == idx));

    let mut start = lines.len();
    let mut used = 0usize;
    if let Some(anchor) = anchor {
        let needed: usize =
            lines[anchor..].iter().map(len).sum::<usize>() + (lines.len() - anchor - 1);
        if needed > budget {
            return Err(Error::TraceTooLarge { needed, budget });
        }
        start = anchor;
        used = needed;
    }
    while start > 0 {
        let cost = len(&lines[start - 1]) + usize::from(start < lines.len());
        if used + cost > budget {
            break;
        }
        used += cost;
        start -= 1;
    }

    let mut out = String::new();
    if start == lines.len() {
        // Not even the final message fits: keep its tail.
        if let Some(last) = lines.last() {
            let keep = budget.saturating_sub(1);
            let skip = len(last).saturating_sub(keep);
            out.push_str(&format!("({} earlier messages omitted)\n", lines.len() - 1));
            out.push('…');
            out.extend(last.chars().skip(skip));
        }
        return Ok(out);
    }
    if start > 0 {
        let _ = writeln!(out, "({start} earlier messages omitted)");
    }
    out.push_str(&lines[start..].join("\n"));
    Ok(out)
}

pub fn scenario_block(s: &ScenarioConfig) -> String {
    format!(
        "iteration_limit: {}\nprompt_quality: {}\ntool_availability: {}\ntask_difficulty: {}",
        s.iteration_limit,
        s.prompt_quality.as_str(),
        s.tool_availability.as_str(),
        s.task_difficulty.as_str()
    )
}

pub fn features_block(f: &FeatureVector) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "iteration_count: {}", f.iteration_count);
    let _ = writeln!(out, "hit_iteration_limit: {}", f.hit_iteration_limit);
    let _ = writeln!(out, "error_count: {}", f.error_count);
    let _ = writeln!(out, "distinct_error_types: {}", f.distinct_error_types);
    let _ = writeln!(
        out,
        "last_error_type: {}",
        f.last_error_type.as_deref().unwrap_or("none")
    );
    let _ = writeln!(out, "validation_tool_invoked: {}", f.validation_tool_invoked);
    let _ = writeln!(
        out,
        "recovery_attempted_after_error: {}",
        f.recovery_attempted_after_error
    );
    let _ = writeln!(out, "repeated_tool_call_loop: {}", f.repeated_tool_call_loop);
    let _ = writeln!(
        out,
        "last_event_kind: {}",
        serde_json::to_value(f.last_event_kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    );
    let _ = writeln!(out, "produced_final_output: {}", f.produced_final_output);
    let _ = write!(out, "task_difficulty: {}", f.task_difficulty.as_str());
    out
}

pub fn taxonomy_block() -> String {
    let mut out = String::new();
    for c in FailureCategory::ALL {
        let _ = writeln!(out, "- {} ({}): {}", c.as_str(), c.display_name(), c.description());
        for s in c.subcategories() {
            let _ = writeln!(out, "    subcategory: \"{}\"", s.label);
        }
    }
    out.truncate(out.trim_end().len());
    out
}

pub fn errors_block(trace: &ExecutionTrace) -> String {
    if trace.errors.is_empty() {
        return "none".into();
    }
    trace
        .errors
        .iter()
        .map(|e| {
            let mut line = format!("[message {}] {}: {}", e.message_index, e.error_type, e.message);
            if let Some(st) = &e.stack_trace {
                let _ = write!(line, "\n    {}", st.replace('\n', "\n    "));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn annotation_block(a: &Annotation) -> String {
    format!(
        "category: {}\nsubcategory: {}\nconfidence: {}\nreasoning: {}",
        a.category.as_str(),
        a.subcategory.label,
        a.confidence,
        a.reasoning
    )
}

/// Text appended to a prompt when the previous response was rejected.
pub fn repair_note(violation: &str) -> String {
    format!(
        "\n\n## Previous response rejected\nYour previous response did not satisfy the \
         required output schema: {violation}\nRespond again, strictly following the schema."
    )
}
