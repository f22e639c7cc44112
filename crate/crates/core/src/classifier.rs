//! Failure classification: a deterministic rule engine, an LLM classifier
//! constrained by the annotation schema, and a hybrid of the two.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Error;
use crate::features::{extract_features_with, FeatureConfig, FeatureVector};
use crate::prompt;
use crate::provider::{ProviderError, StructuredClient, StructuredRequest};
use crate::taxonomy::{
    annotation_output_schema, needs_review, Annotation, AnnotationSource, FailureCategory,
    FailureSubcategory,
};
use crate::trace::{ExecutionTrace, OutcomeStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    #[default]
    RuleBased,
    Llm,
    Hybrid,
}

impl ClassifierMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierMode::RuleBased => "rule_based",
            ClassifierMode::Llm => "llm",
            ClassifierMode::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for ClassifierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "rule_based" | "rules" => Ok(ClassifierMode::RuleBased),
            "llm" => Ok(ClassifierMode::Llm),
            "hybrid" => Ok(ClassifierMode::Hybrid),
            other => Err(format!("unknown classifier mode `{other}`")),
        }
    }
}

/// One row of the rule table. Rules are tried in table order.
pub struct Rule {
    pub id: &'static str,
    pub category: FailureCategory,
    pub confidence: f64,
    matches: fn(&FeatureVector) -> bool,
    evidence: fn(&FeatureVector) -> String,
}

impl Rule {
    pub fn matches(&self, f: &FeatureVector) -> bool {
        (self.matches)(f)
    }
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rule")
            .field("id", &self.id)
            .field("category", &self.category)
            .field("confidence", &self.confidence)
            .finish()
    }
}

pub static RULES: [Rule; 4] = [
    Rule {
        id: "R1",
        category: FailureCategory::IterativeRefinementFailure,
        confidence: 0.9,
        matches: |f| f.hit_iteration_limit && f.error_count > 0 && !f.recovery_attempted_after_error,
        evidence: |f| {
            format!(
                "iteration budget exhausted ({} iterations, hit_iteration_limit=true) with the last error ({}) left unresolved",
                f.iteration_count,
                f.last_error_type.as_deref().unwrap_or("unknown")
            )
        },
    },
    Rule {
        id: "R2",
        category: FailureCategory::TestingValidationFailure,
        confidence: 0.7,
        matches: |f| !f.validation_tool_invoked,
        evidence: |_| "no validation tool was invoked before the run ended (validation_tool_invoked=false)".into(),
    },
    Rule {
        id: "R3",
        category: FailureCategory::CodeGenerationFailure,
        confidence: 0.5,
        matches: |f| f.produced_final_output && f.error_count == 0,
        evidence: |_| "the run finished cleanly with a final output and zero errors, yet failed (produced_final_output=true, error_count=0)".into(),
    },
    Rule {
        id: "R4",
        category: FailureCategory::UnderstandingFailure,
        confidence: 0.4,
        matches: |_| true,
        evidence: |f| {
            format!(
                "no structural rule matched (error_count={}, validation_tool_invoked={}, produced_final_output={})",
                f.error_count, f.validation_tool_invoked, f.produced_final_output
            )
        },
    },
];

/// The first rule in precedence order whose condition holds.
pub fn fired_rule(features: &FeatureVector) -> &'static Rule {
    RULES
        .iter()
        .find(|r| r.matches(features))
        .expect("fallback rule always matches")
}

pub fn classify_rule_based(features: &FeatureVector) -> Result<Annotation, Error> {
    if features.outcome_status == OutcomeStatus::Success {
        return Err(Error::NotAFailure("features describe a successful run".into()));
    }
    let rule = fired_rule(features);
    let reasoning = format!("rule {} fired: {}", rule.id, (rule.evidence)(features));
    Annotation::new(rule.category, rule.confidence, reasoning, AnnotationSource::RuleBased)
}

const CLASSIFIER_SYSTEM: &str = "You analyze failed runs of an LLM coding agent. \
Classify each failure into exactly one category of the failure taxonomy you are given, \
choose the matching subcategory, estimate the probability that your category is correct, \
and justify the choice with concrete evidence from the trace. \
Answer only by calling the provided function.";

pub fn classification_request(
    trace: &ExecutionTrace,
    features: &FeatureVector,
) -> Result<StructuredRequest, Error> {
    let excerpt = prompt::trace_excerpt(trace, prompt::EXCERPT_BUDGET)?;
    let user = format!(
        "## Task\n{task}\n\n## Scenario\n{scenario}\n\n## Extracted features\n{features}\n\n\
         ## Failure taxonomy\n{taxonomy}\n\n## Errors\n{errors}\n\n## Trace excerpt\n{excerpt}\n\n\
         Classify this failure.",
        task = trace.task_description,
        scenario = prompt::scenario_block(&trace.scenario),
        features = prompt::features_block(features),
        taxonomy = prompt::taxonomy_block(),
        errors = prompt::errors_block(trace),
    );
    Ok(StructuredRequest::new(CLASSIFIER_SYSTEM, user, annotation_output_schema()))
}

/// Sends `request`, retrying once with the violation appended when the
/// response does not satisfy the schema or cannot be converted by `convert`.
pub(crate) fn complete_with_repair<T>(
    client: &StructuredClient,
    request: StructuredRequest,
    convert: impl Fn(Value) -> Result<T, String>,
) -> Result<T, ProviderError> {
    let attempt = |req: &StructuredRequest| -> Result<T, ProviderError> {
        let payload = client.complete_structured(req)?;
        convert(payload).map_err(ProviderError::SchemaViolation)
    };
    match attempt(&request) {
        Err(ProviderError::SchemaViolation(violation)) => {
            log::warn!("structured response rejected ({violation}); retrying once");
            let mut repaired = request;
            repaired.user_text.push_str(&prompt::repair_note(&violation));
            attempt(&repaired)
        }
        other => other,
    }
}

fn annotation_from_payload(payload: Value) -> Result<Annotation, String> {
    let category: FailureCategory = payload["category"]
        .as_str()
        .ok_or("category missing")?
        .parse()
        .map_err(|e: Error| e.to_string())?;
    let confidence = payload["confidence"].as_f64().ok_or("confidence missing")?;
    let reasoning = payload["reasoning"].as_str().unwrap_or_default();
    let mut annotation = Annotation::new(category, confidence, reasoning, AnnotationSource::Llm)
        .map_err(|e| e.to_string())?;
    let label = payload["subcategory"].as_str().unwrap_or_default();
    match FailureSubcategory::lookup(category, label) {
        Some(sub) => annotation.subcategory = sub,
        None => log::warn!(
            "model returned subcategory `{label}` outside {category}; using `{}`",
            annotation.subcategory.label
        ),
    }
    Ok(annotation)
}

pub fn classify_llm(
    trace: &ExecutionTrace,
    features: &FeatureVector,
    client: &StructuredClient,
) -> Result<Annotation, Error> {
    if !trace.is_failure() {
        return Err(Error::NotAFailure(trace.trace_id.clone()));
    }
    let request = classification_request(trace, features)?;
    Ok(complete_with_repair(client, request, annotation_from_payload)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub annotation: Annotation,
    pub features: FeatureVector,
    pub warnings: Vec<String>,
}

pub fn classify(
    trace: &ExecutionTrace,
    mode: ClassifierMode,
    client: Option<&StructuredClient>,
) -> Result<Classification, Error> {
    classify_with(trace, mode, client, &FeatureConfig::default())
}

pub fn classify_with(
    trace: &ExecutionTrace,
    mode: ClassifierMode,
    client: Option<&StructuredClient>,
    feature_config: &FeatureConfig,
) -> Result<Classification, Error> {
    let features = extract_features_with(trace, feature_config)?;
    if !trace.is_failure() {
        return Err(Error::NotAFailure(trace.trace_id.clone()));
    }
    let mut warnings = Vec::new();
    let annotation = match (mode, client) {
        (ClassifierMode::RuleBased, _) => classify_rule_based(&features)?,
        (_, None) => {
            let msg = format!("{mode} mode without a configured provider; using rule_based");
            log::warn!("{msg}");
            warnings.push(msg);
            classify_rule_based(&features)?
        }
        (ClassifierMode::Llm, Some(client)) => classify_llm(trace, &features, client)?,
        (ClassifierMode::Hybrid, Some(client)) => {
            let rule = classify_rule_based(&features)?;
            if needs_review(rule.confidence) {
                match classify_llm(trace, &features, client) {
                    Ok(llm) => llm,
                    Err(err) => {
                        let msg = format!("LLM classification failed ({err}); keeping rule result");
                        log::warn!("{msg}");
                        warnings.push(msg);
                        rule
                    }
                }
            } else {
                rule
            }
        }
    };
    Ok(Classification {
        annotation,
        features,
        warnings,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::features::EventKind;
    use crate::provider::{MockProvider, MockResponse};
    use crate::trace::tests::{call, minimal, msg, result};
    use crate::trace::{ErrorRecord, Role, TaskDifficulty};

    fn features() -> FeatureVector {
        FeatureVector {
            iteration_count: 2,
            hit_iteration_limit: false,
            error_count: 0,
            distinct_error_types: 0,
            last_error_type: None,
            validation_tool_invoked: true,
            recovery_attempted_after_error: false,
            repeated_tool_call_loop: false,
            last_event_kind: EventKind::AgentMessage,
            produced_final_output: false,
            task_difficulty: TaskDifficulty::Easy,
            outcome_status: OutcomeStatus::Failure,
        }
    }

    /// human, run_code, error; limit 2 used 2; no agent after the error.
    pub(crate) fn r1_trace() -> ExecutionTrace {
        let mut t = minimal();
        t.trace_id = "r1".into();
        t.outcome.status = OutcomeStatus::Failure;
        t.messages.extend([
            call(1, "run_code", "a"),
            result(2, 1, "Traceback"),
            call(3, "run_code", "b"),
            result(4, 3, "Traceback"),
        ]);
        t.errors = vec![
            ErrorRecord {
                error_type: "SyntaxError".into(),
                message: "invalid syntax".into(),
                stack_trace: None,
                message_index: 2,
            },
            ErrorRecord {
                error_type: "SyntaxError".into(),
                message: "invalid syntax".into(),
                stack_trace: None,
                message_index: 4,
            },
        ];
        t.outcome.iterations_used = 2;
        t
    }

    /// human, write_file, tool ok, final answer; no validation; limit 5.
    pub(crate) fn r2_trace() -> ExecutionTrace {
        let mut t = minimal();
        t.trace_id = "r2".into();
        t.scenario.iteration_limit = 5;
        t.outcome.status = OutcomeStatus::Failure;
        t.messages.extend([
            call(1, "write_file", "solution.py"),
            result(2, 1, "written"),
            msg(3, Role::Agent, "done"),
        ]);
        t.outcome.iterations_used = 2;
        t.outcome.final_output = Some("def f(): pass".into());
        t
    }

    fn mock_client(script: Vec<MockResponse>) -> (Arc<MockProvider>, StructuredClient) {
        let mock = Arc::new(MockProvider::new(script));
        let client = StructuredClient::new(mock.clone(), 0).with_sleeper(Arc::new(|_| {}));
        (mock, client)
    }

    fn canned(category: &str, confidence: f64) -> MockResponse {
        MockResponse::Payload(json!({
            "category": category,
            "subcategory": "whatever",
            "confidence": confidence,
            "reasoning": "canned"
        }))
    }

    #[test]
    fn r1_fires_on_exhausted_budget() {
        let mut f = features();
        f.hit_iteration_limit = true;
        f.error_count = 1;
        f.last_error_type = Some("SyntaxError".into());
        f.validation_tool_invoked = false;
        let a = classify_rule_based(&f).unwrap();
        assert_eq!(a.category, FailureCategory::IterativeRefinementFailure);
        assert_eq!(a.confidence, 0.9);
        assert!(!a.needs_review);
        assert!(a.reasoning.starts_with("rule R1 fired"));
        assert!(a.reasoning.contains("SyntaxError"));
    }

    #[test]
    fn r2_fires_without_validation() {
        let mut f = features();
        f.validation_tool_invoked = false;
        let a = classify_rule_based(&f).unwrap();
        assert_eq!(a.category, FailureCategory::TestingValidationFailure);
        assert_eq!(a.confidence, 0.7);
        assert!(a.needs_review);
    }

    #[test]
    fn r3_and_fallback() {
        let mut f = features();
        f.produced_final_output = true;
        let a = classify_rule_based(&f).unwrap();
        assert_eq!((a.category, a.confidence), (FailureCategory::CodeGenerationFailure, 0.5));

        let a = classify_rule_based(&features()).unwrap();
        assert_eq!(a.category, FailureCategory::UnderstandingFailure);
        assert_eq!(a.confidence, 0.4);
        assert!(a.needs_review);
    }

    #[test]
    fn recovered_errors_do_not_fire_r1() {
        let mut f = features();
        f.hit_iteration_limit = true;
        f.error_count = 1;
        f.recovery_attempted_after_error = true;
        assert_eq!(fired_rule(&f).id, "R4");
    }

    #[test]
    fn success_is_not_classified() {
        let mut f = features();
        f.outcome_status = OutcomeStatus::Success;
        assert!(matches!(classify_rule_based(&f), Err(Error::NotAFailure(_))));
    }

    #[test]
    fn exactly_one_rule_fires_and_never_planning() {
        // Enumerate every combination of the boolean inputs the rules read.
        for bits in 0..32u32 {
            let mut f = features();
            f.hit_iteration_limit = bits & 1 != 0;
            f.error_count = usize::from(bits & 2 != 0);
            f.recovery_attempted_after_error = bits & 4 != 0 && f.error_count > 0;
            f.validation_tool_invoked = bits & 8 != 0;
            f.produced_final_output = bits & 16 != 0;
            let first = RULES.iter().position(|r| r.matches(&f)).unwrap();
            let a = classify_rule_based(&f).unwrap();
            assert_eq!(a.category, RULES[first].category);
            assert_ne!(a.category, FailureCategory::PlanningFailure);
            assert_eq!(a.needs_review, a.confidence <= 0.8);
        }
    }

    #[test]
    fn llm_pass_through() {
        let (mock, client) = mock_client(vec![canned("iterative_refinement_failure", 0.92)]);
        let t = r1_trace();
        let f = crate::features::extract_features(&t).unwrap();
        let a = classify_llm(&t, &f, &client).unwrap();
        assert_eq!(a.category, FailureCategory::IterativeRefinementFailure);
        assert_eq!(a.confidence, 0.92);
        assert!(!a.needs_review);
        assert_eq!(a.source, AnnotationSource::Llm);
        assert_eq!(a.subcategory.label, "Exceeded iteration limit without progress");

        let req = &mock.requests()[0];
        assert!(req.user_text.contains("hit_iteration_limit: true"));
        assert!(req.user_text.contains("Did not run validation tests"));
        assert!(req.user_text.contains("[message 4] SyntaxError"));
        assert!(req.user_text.contains(&t.task_description));
        assert_eq!(req.output_schema, annotation_output_schema());
    }

    #[test]
    fn llm_confidence_at_threshold_needs_review() {
        let (_, client) = mock_client(vec![canned("understanding_failure", 0.8)]);
        let t = r1_trace();
        let f = crate::features::extract_features(&t).unwrap();
        assert!(classify_llm(&t, &f, &client).unwrap().needs_review);
    }

    #[test]
    fn llm_out_of_enum_category_repairs_once_then_fails() {
        let (mock, client) = mock_client(vec![canned("Unknown", 0.9), canned("Unknown", 0.9)]);
        let t = r1_trace();
        let f = crate::features::extract_features(&t).unwrap();
        let err = classify_llm(&t, &f, &client).unwrap_err();
        assert_eq!(err.code(), "SCHEMA_VIOLATION");
        let reqs = mock.requests();
        assert_eq!(reqs.len(), 2);
        assert!(reqs[1].user_text.contains("Previous response rejected"));
        assert!(!reqs[0].user_text.contains("Previous response rejected"));
    }

    #[test]
    fn llm_repair_can_succeed() {
        let (_, client) = mock_client(vec![canned("Unknown", 0.9), canned("planning_failure", 0.6)]);
        let t = r1_trace();
        let f = crate::features::extract_features(&t).unwrap();
        let a = classify_llm(&t, &f, &client).unwrap();
        assert_eq!(a.category, FailureCategory::PlanningFailure);
    }

    #[test]
    fn hybrid_without_provider_degrades() {
        let c = classify(&r1_trace(), ClassifierMode::Hybrid, None).unwrap();
        assert_eq!(c.annotation.source, AnnotationSource::RuleBased);
        assert_eq!(c.annotation.category, FailureCategory::IterativeRefinementFailure);
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn hybrid_consults_llm_only_below_threshold() {
        let (mock, client) = mock_client(vec![canned("code_generation_failure", 0.85)]);
        let c = classify(&r2_trace(), ClassifierMode::Hybrid, Some(&client)).unwrap();
        assert_eq!(c.annotation.source, AnnotationSource::Llm);
        assert_eq!(c.annotation.category, FailureCategory::CodeGenerationFailure);
        assert_eq!(mock.call_count(), 1);

        let (mock, client) = mock_client(vec![]);
        let c = classify(&r1_trace(), ClassifierMode::Hybrid, Some(&client)).unwrap();
        assert_eq!(c.annotation.source, AnnotationSource::RuleBased);
        assert_eq!(mock.call_count(), 0);
    }

    #[test]
    fn hybrid_keeps_rule_result_when_llm_fails() {
        let (_, client) = mock_client(vec![MockResponse::Fail(ProviderError::Auth("no".into()))]);
        let c = classify(&r2_trace(), ClassifierMode::Hybrid, Some(&client)).unwrap();
        assert_eq!(c.annotation.category, FailureCategory::TestingValidationFailure);
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn llm_mode_propagates_provider_errors() {
        let (_, client) = mock_client(vec![MockResponse::Fail(ProviderError::Auth("no".into()))]);
        let err = classify(&r2_trace(), ClassifierMode::Llm, Some(&client)).unwrap_err();
        assert_eq!(err.code(), "AUTH");
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("rule_based".parse::<ClassifierMode>().unwrap(), ClassifierMode::RuleBased);
        assert_eq!("rule-based".parse::<ClassifierMode>().unwrap(), ClassifierMode::RuleBased);
        assert_eq!("hybrid".parse::<ClassifierMode>().unwrap(), ClassifierMode::Hybrid);
        assert!("gpt".parse::<ClassifierMode>().is_err());
    }
}
