//! The coding-agent failure taxonomy and the annotation record.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::error::Error;

pub const TAXONOMY_SCHEMA_VERSION: &str = "1.0";

/// Annotations at or below this confidence are flagged for human review.
pub const REVIEW_THRESHOLD: f64 = 0.8;

pub fn needs_review(confidence: f64) -> bool {
    confidence.is_nan() || confidence <= REVIEW_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    PlanningFailure,
    CodeGenerationFailure,
    TestingValidationFailure,
    UnderstandingFailure,
    IterativeRefinementFailure,
}

impl FailureCategory {
    /// Taxonomy table order.
    pub const ALL: [FailureCategory; 5] = [
        FailureCategory::PlanningFailure,
        FailureCategory::CodeGenerationFailure,
        FailureCategory::TestingValidationFailure,
        FailureCategory::UnderstandingFailure,
        FailureCategory::IterativeRefinementFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::PlanningFailure => "planning_failure",
            FailureCategory::CodeGenerationFailure => "code_generation_failure",
            FailureCategory::TestingValidationFailure => "testing_validation_failure",
            FailureCategory::UnderstandingFailure => "understanding_failure",
            FailureCategory::IterativeRefinementFailure => "iterative_refinement_failure",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FailureCategory::PlanningFailure => "Planning Failure",
            FailureCategory::CodeGenerationFailure => "Code Generation Failure",
            FailureCategory::TestingValidationFailure => "Testing/Validation Failure",
            FailureCategory::UnderstandingFailure => "Understanding Failure",
            FailureCategory::IterativeRefinementFailure => "Iterative Refinement Failure",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            FailureCategory::PlanningFailure => {
                "The agent broke the problem into steps that do not add up to a solution, \
                 or left planned steps unexecuted."
            }
            FailureCategory::CodeGenerationFailure => {
                "The agent understood the task and ran cleanly, but the implementation \
                 it produced is logically wrong."
            }
            FailureCategory::TestingValidationFailure => {
                "The agent finalized an answer without executing the tests or validation \
                 tools that would have exposed the defect."
            }
            FailureCategory::UnderstandingFailure => {
                "The agent solved a different problem than the one asked, misreading \
                 requirements, inputs, or expected outputs."
            }
            FailureCategory::IterativeRefinementFailure => {
                "The agent ran out of its iteration budget while errors were still \
                 outstanding, making no net progress toward a fix."
            }
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn subcategories(self) -> Vec<FailureSubcategory> {
        subcategories_of(self)
    }

    /// The single canonical subcategory of this category.
    pub fn canonical_subcategory(self) -> FailureSubcategory {
        let label = match self {
            FailureCategory::PlanningFailure => "Incorrect problem decomposition",
            FailureCategory::CodeGenerationFailure => "Logic errors (wrong implementation)",
            FailureCategory::TestingValidationFailure => "Did not run validation tests",
            FailureCategory::UnderstandingFailure => "Misunderstood problem requirements",
            FailureCategory::IterativeRefinementFailure => {
                "Exceeded iteration limit without progress"
            }
        };
        FailureSubcategory {
            category: self,
            label,
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown failure category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FailureSubcategory {
    pub category: FailureCategory,
    pub label: &'static str,
}

impl FailureSubcategory {
    /// Resolves a label against a category's canonical list, ignoring case and
    /// surrounding whitespace.
    pub fn lookup(category: FailureCategory, label: &str) -> Option<FailureSubcategory> {
        let wanted = label.trim();
        subcategories_of(category)
            .into_iter()
            .find(|s| s.label.eq_ignore_ascii_case(wanted))
    }
}

impl Serialize for FailureSubcategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label)
    }
}

/// Canonical subcategories of a category, in taxonomy table order.
pub fn subcategories_of(category: FailureCategory) -> Vec<FailureSubcategory> {
    vec![category.canonical_subcategory()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    RuleBased,
    Llm,
    Human,
}

impl AnnotationSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationSource::RuleBased => "rule_based",
            AnnotationSource::Llm => "llm",
            AnnotationSource::Human => "human",
        }
    }
}

/// A single classification of a failed trace.
///
/// Construct through [`Annotation::new`]; `needs_review` is always derived
/// from `confidence` and the subcategory always belongs to `category`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Annotation {
    pub category: FailureCategory,
    pub subcategory: FailureSubcategory,
    pub confidence: f64,
    pub reasoning: String,
    pub needs_review: bool,
    pub source: AnnotationSource,
}

impl Annotation {
    pub fn new(
        category: FailureCategory,
        confidence: f64,
        reasoning: impl Into<String>,
        source: AnnotationSource,
    ) -> Result<Self, Error> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Parse(format!(
                "confidence {confidence} is outside [0, 1]"
            )));
        }
        Ok(Annotation {
            category,
            subcategory: category.canonical_subcategory(),
            confidence,
            reasoning: reasoning.into(),
            needs_review: needs_review(confidence),
            source,
        })
    }
}

#[derive(Deserialize)]
struct RawAnnotation {
    category: FailureCategory,
    subcategory: String,
    confidence: f64,
    #[serde(default)]
    reasoning: String,
    #[serde(default)]
    #[allow(dead_code)]
    needs_review: Option<bool>,
    #[serde(default = "default_source")]
    source: AnnotationSource,
}

fn default_source() -> AnnotationSource {
    AnnotationSource::Human
}

impl<'de> Deserialize<'de> for Annotation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawAnnotation::deserialize(deserializer)?;
        let subcategory = FailureSubcategory::lookup(raw.category, &raw.subcategory)
            .ok_or_else(|| {
                D::Error::custom(format!(
                    "subcategory `{}` does not belong to {}",
                    raw.subcategory, raw.category
                ))
            })?;
        let mut annotation =
            Annotation::new(raw.category, raw.confidence, raw.reasoning, raw.source)
                .map_err(D::Error::custom)?;
        annotation.subcategory = subcategory;
        Ok(annotation)
    }
}

/// JSON schema constraining a structured classification response.
pub fn annotation_output_schema() -> Value {
    let categories: Vec<&str> = FailureCategory::ALL.iter().map(|c| c.as_str()).collect();
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "$id": format!("urn:failscope:schema:annotation:{TAXONOMY_SCHEMA_VERSION}"),
        "title": "classify_failure",
        "description": "Classification of a failed coding-agent run into the failure taxonomy.",
        "type": "object",
        "properties": {
            "category": {
                "type": "string",
                "enum": categories,
                "description": "Failure category identifier."
            },
            "subcategory": {
                "type": "string",
                "minLength": 1,
                "description": "Subcategory label from the taxonomy."
            },
            "confidence": {
                "type": "number",
                "minimum": 0,
                "maximum": 1,
                "description": "Probability that the category is correct."
            },
            "reasoning": {
                "type": "string",
                "minLength": 1,
                "description": "Evidence from the trace supporting the classification."
            }
        },
        "required": ["category", "subcategory", "confidence", "reasoning"],
        "additionalProperties": false
    })
}

/// Reference document listing every category, subcategory, and description.
pub fn taxonomy_document() -> Value {
    let categories: Vec<Value> = FailureCategory::ALL
        .iter()
        .map(|c| {
            json!({
                "id": c.as_str(),
                "name": c.display_name(),
                "description": c.description(),
                "subcategories": c.subcategories().iter().map(|s| s.label).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "schema_version": TAXONOMY_SCHEMA_VERSION,
        "review_threshold": REVIEW_THRESHOLD,
        "categories": categories,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub category: FailureCategory,
    pub subcategory: FailureSubcategory,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub rows: Vec<DistributionRow>,
    pub total: usize,
}

impl Distribution {
    pub fn counts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.count).collect()
    }

    pub fn count_of(&self, category: FailureCategory) -> usize {
        self.rows
            .iter()
            .filter(|r| r.category == category)
            .map(|r| r.count)
            .sum()
    }

    /// Share of `category` as a percentage of the total (0 for an empty table).
    pub fn share_percent(&self, category: FailureCategory) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        100.0 * self.count_of(category) as f64 / self.total as f64
    }
}

pub fn summarize_distribution<'a, I>(annotations: I) -> Distribution
where
    I: IntoIterator<Item = &'a Annotation>,
{
    let mut rows: Vec<DistributionRow> = FailureCategory::ALL
        .iter()
        .flat_map(|c| c.subcategories())
        .map(|s| DistributionRow {
            category: s.category,
            subcategory: s,
            count: 0,
        })
        .collect();
    let mut total = 0;
    for a in annotations {
        total += 1;
        if let Some(row) = rows.iter_mut().find(|r| r.subcategory == a.subcategory) {
            row.count += 1;
        }
    }
    Distribution { rows, total }
}
