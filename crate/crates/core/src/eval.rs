//! Classifier quality against gold labels: accuracy, high-confidence
//! accuracy, Cohen's kappa, and the confusion matrix.
//!
//! Matching is category-level. Every category has exactly one subcategory,
//! so subcategory-level matching would give identical numbers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::taxonomy::{
    Annotation, AnnotationSource, FailureCategory, FailureSubcategory, REVIEW_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub trace_id: String,
    pub category: FailureCategory,
    pub subcategory: String,
}

impl GoldRecord {
    pub fn new(trace_id: impl Into<String>, category: FailureCategory) -> Self {
        GoldRecord {
            trace_id: trace_id.into(),
            category,
            subcategory: category.canonical_subcategory().label.to_string(),
        }
    }

    /// The gold label as a human annotation with full confidence.
    pub fn to_annotation(&self) -> Result<Annotation, Error> {
        let subcategory = FailureSubcategory::lookup(self.category, &self.subcategory).ok_or_else(|| {
            Error::Parse(format!(
                "gold record {}: subcategory `{}` does not belong to {}",
                self.trace_id, self.subcategory, self.category
            ))
        })?;
        let mut a = Annotation::new(self.category, 1.0, "gold label", AnnotationSource::Human)?;
        a.subcategory = subcategory;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub trace_id: String,
    #[serde(flatten)]
    pub annotation: Annotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub threshold: f64,
    pub high_conf_n: usize,
    pub high_conf_accuracy: Option<f64>,
    pub kappa: f64,
    /// Row and column order of `confusion`.
    pub labels: Vec<FailureCategory>,
    /// Counts indexed `[gold][predicted]`.
    pub confusion: [[usize; 5]; 5],
}

/// Fraction of predictions whose category equals the gold category.
pub fn accuracy(pairs: &[(Annotation, FailureCategory)]) -> Result<f64, Error> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = pairs.iter().filter(|(p, g)| p.category == *g).count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Cohen's kappa between two raters over `(predicted, gold)` label pairs.
///
/// Computed in integer arithmetic, so the value does not depend on label
/// order. When chance agreement is 1 (both raters constant and equal) the
/// result is defined as 1.0.
pub fn cohen_kappa<L: Ord>(pairs: &[(L, L)]) -> Result<f64, Error> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = pairs.len() as u128;
    let agree = pairs.iter().filter(|(p, g)| p == g).count() as u128;
    if agree == n {
        return Ok(1.0);
    }
    let mut predicted: BTreeMap<&L, u128> = BTreeMap::new();
    let mut gold: BTreeMap<&L, u128> = BTreeMap::new();
    for (p, g) in pairs {
        *predicted.entry(p).or_default() += 1;
        *gold.entry(g).or_default() += 1;
    }
    let chance: u128 = gold
        .iter()
        .map(|(label, g)| g * predicted.get(label).copied().unwrap_or(0))
        .sum();
    // kappa = (p_o - p_e) / (1 - p_e) with p_o = agree/n, p_e = chance/n^2
    let denom = n * n - chance;
    if denom == 0 {
        log::warn!("degenerate kappa: chance agreement is 1; reporting 1.0");
        return Ok(1.0);
    }
    let numer = (agree * n) as f64 - chance as f64;
    Ok(numer / denom as f64)
}

pub fn confusion_matrix(pairs: &[(FailureCategory, FailureCategory)]) -> [[usize; 5]; 5] {
    let mut m = [[0usize; 5]; 5];
    for (pred, gold) in pairs {
        m[gold.index()][pred.index()] += 1;
    }
    m
}

pub fn evaluate_pairs(
    pairs: &[(Annotation, FailureCategory)],
    threshold: f64,
) -> Result<EvalMetrics, Error> {
    let accuracy = accuracy(pairs)?;
    let labels: Vec<(FailureCategory, FailureCategory)> =
        pairs.iter().map(|(p, g)| (p.category, *g)).collect();
    let high: Vec<(Annotation, FailureCategory)> = pairs
        .iter()
        .filter(|(p, _)| p.confidence > threshold)
        .cloned()
        .collect();
    let high_conf_accuracy = if high.is_empty() {
        None
    } else {
        Some(self::accuracy(&high)?)
    };
    Ok(EvalMetrics {
        n: pairs.len(),
        accuracy,
        threshold,
        high_conf_n: high.len(),
        high_conf_accuracy,
        kappa: cohen_kappa(&labels)?,
        labels: FailureCategory::ALL.to_vec(),
        confusion: confusion_matrix(&labels),
    })
}

/// Joins predictions to gold labels on `trace_id` and computes all metrics.
pub fn evaluate_records(
    predictions: &[PredictionRecord],
    gold: &[GoldRecord],
    threshold: f64,
) -> Result<EvalMetrics, Error> {
    let mut gold_by_id: BTreeMap<&str, FailureCategory> = BTreeMap::new();
    for g in gold {
        g.to_annotation()?;
        if gold_by_id.insert(&g.trace_id, g.category).is_some() {
            return Err(Error::Parse(format!("duplicate gold trace_id `{}`", g.trace_id)));
        }
    }
    let mut seen = BTreeSet::new();
    for p in predictions {
        if !seen.insert(p.trace_id.as_str()) {
            return Err(Error::Parse(format!("duplicate prediction trace_id `{}`", p.trace_id)));
        }
    }
    let missing_gold: Vec<String> = seen
        .iter()
        .filter(|id| !gold_by_id.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    let missing_predictions: Vec<String> = gold_by_id
        .keys()
        .filter(|id| !seen.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !missing_gold.is_empty() || !missing_predictions.is_empty() {
        return Err(Error::IdMismatch {
            missing_predictions,
            missing_gold,
        });
    }
    let pairs: Vec<(Annotation, FailureCategory)> = predictions
        .iter()
        .map(|p| (p.annotation.clone(), gold_by_id[p.trace_id.as_str()]))
        .collect();
    evaluate_pairs(&pairs, threshold)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldRecord>, Error> {
    read_json(path)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, Error> {
    read_json(path)
}

pub fn evaluate(predictions: &Path, gold: &Path, threshold: f64) -> Result<EvalMetrics, Error> {
    evaluate_records(&load_predictions(predictions)?, &load_gold(gold)?, threshold)
}

pub const DEFAULT_THRESHOLD: f64 = REVIEW_THRESHOLD;
