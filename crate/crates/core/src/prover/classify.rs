//! Ordered pattern table mapping prover error text to an [`ErrorClass`].
//!
//! The default table ships as `data/error_patterns.json`; a replacement can
//! be loaded from disk without touching code.

use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::{ErrorClass, ProverError, ProverMessage};
use crate::theory::TheoryLayout;

const DEFAULT_TABLE: &str = include_str!("../../data/error_patterns.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Any,
    /// Span inside `proof … qed` (or the closing `by`).
    Proof,
    /// Span before the proof starts.
    PreProof,
}

#[derive(Debug, Deserialize)]
struct RuleSpec {
    pattern: String,
    class: ErrorClass,
    region: Region,
}

#[derive(Debug, Clone)]
struct Rule {
    pattern: Regex,
    class: ErrorClass,
    region: Region,
}

#[derive(Debug, Clone)]
pub struct ErrorClassifier {
    rules: Vec<Rule>,
}

impl Default for ErrorClassifier {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("bundled error table is valid")
    }
}

impl ErrorClassifier {
    pub fn from_json(json: &str) -> Result<Self, ProverError> {
        let specs: Vec<RuleSpec> =
            serde_json::from_str(json).map_err(|e| ProverError::Config(format!("error table: {e}")))?;
        let rules = specs
            .into_iter()
            .map(|s| {
                Regex::new(&s.pattern)
                    .map(|pattern| Rule { pattern, class: s.class, region: s.region })
                    .map_err(|e| ProverError::Config(format!("pattern {:?}: {e}", s.pattern)))
            })
            .collect::<Result<_, _>>()?;
        Ok(ErrorClassifier { rules })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProverError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProverError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// First matching rule wins; `Unknown` when none does. Region rules need
    /// both a span and a layout to match.
    pub fn classify(&self, msg: &ProverMessage, layout: Option<&TheoryLayout>) -> ErrorClass {
        let line = msg.span.map(|s| s.line);
        for rule in &self.rules {
            let region_ok = match rule.region {
                Region::Any => true,
                Region::Proof => matches!((line, layout), (Some(l), Some(lay)) if lay.in_proof(l)),
                Region::PreProof => matches!(
                    (line, layout),
                    (Some(l), Some(lay)) if lay.proof_line.is_some_and(|p| l < p)
                ),
            };
            if region_ok && rule.pattern.is_match(&msg.text) {
                return rule.class;
            }
        }
        ErrorClass::Unknown
    }
}

/// Classifies with the bundled table.
pub fn classify_error(msg: &ProverMessage, layout: Option<&TheoryLayout>) -> ErrorClass {
    ErrorClassifier::default().classify(msg, layout)
}
