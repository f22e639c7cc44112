//! Failure analysis for LLM coding-agent execution traces: trace parsing and
//! validation, feature extraction, taxonomy classification, execution-flow
//! graphs, explanations, recommendations, reports, and evaluation metrics.

pub mod classifier;
pub mod cli;
pub mod error;
pub mod eval;
pub mod explainer;
pub mod features;
pub mod fixtures;
pub mod flowgraph;
pub mod pipeline;
pub mod prompt;
pub mod provider;
pub mod recommender;
pub mod report;
pub mod taxonomy;
pub mod trace;

pub use error::{Error, Result};
