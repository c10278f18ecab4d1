//! The refinement loop: formalise, repair syntax, infer, prove, check, and
//! on failure feed the prover's verdict back into a rewritten explanation.

mod formalise;
mod refiner;
mod stages;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmError, StageKind};
use crate::prover::{CheckReport, ErrorClassifier, ProverBackend, ProverError, DEFAULT_TIMEOUT};
use crate::theory::{Axiom, ProofStep, TheoryDoc, TheoryError};

pub use formalise::{formalise, FormulaCache};
pub use refiner::{run_refiner, Refiner};
pub use stages::{
    assemble_feedback, attach_proof, construct_proof, filter_facts, infer_and_prove, refine_explanation,
    refine_syntax_loop, rough_inference, FactIds, SyntaxOutcome,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub id: String,
    pub text: String,
}

impl Fact {
    pub fn new(id: &str, text: &str) -> Fact {
        Fact { id: id.to_string(), text: text.to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSource {
    #[default]
    Entailment,
    Mcqa,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NLIProblem {
    pub id: String,
    pub premise_text: Option<String>,
    pub hypothesis_text: String,
    pub explanation: Vec<Fact>,
    #[serde(default)]
    pub source: ProblemSource,
    /// Free-form labels; `dataset` groups problems in reports.
    #[serde(default)]
    pub annotations: BTreeMap<String, String>,
}

/// Sentence ids reserved for the theorem's two sentences.
pub const PREMISE_ID: &str = "premise";
pub const HYPOTHESIS_ID: &str = "hypothesis";

impl NLIProblem {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidProblem(m));
        if self.id.trim().is_empty() {
            return bad("empty problem id".into());
        }
        if self.hypothesis_text.trim().is_empty() {
            return bad(format!("{}: empty hypothesis", self.id));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.explanation {
            if f.text.trim().is_empty() {
                return bad(format!("{}: fact {} is empty", self.id, f.id));
            }
            if f.id == PREMISE_ID || f.id == HYPOTHESIS_ID || f.id.contains(char::is_whitespace) || f.id.is_empty() {
                return bad(format!("{}: invalid fact id {:?}", self.id, f.id));
            }
            if !seen.insert(f.id.as_str()) {
                return bad(format!("{}: duplicate fact id {}", self.id, f.id));
            }
        }
        Ok(())
    }

    pub fn dataset(&self) -> Option<&str> {
        self.annotations.get("dataset").map(String::as_str)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceStrategy {
    pub narrative: String,
    pub relevant_fact_ids: Vec<String>,
    pub redundant_fact_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedStep {
    pub index: usize,
    pub step: ProofStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackBundle {
    pub error_message: String,
    /// Absent when the theory failed before its proof.
    pub failed_step: Option<FailedStep>,
    pub strategy: Option<InferenceStrategy>,
    /// The axioms the failed step cites.
    pub relevant_axioms: Vec<Axiom>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    ValidInitially,
    RefinedValid,
    ExhaustedInvalid,
}

impl FinalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalStatus::ValidInitially => "valid_initially",
            FinalStatus::RefinedValid => "refined_valid",
            FinalStatus::ExhaustedInvalid => "exhausted_invalid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub round: usize,
    pub explanation_before: Vec<Fact>,
    /// The theory as last checked, and its rendered text.
    pub theory: Option<TheoryDoc>,
    pub theory_text: Option<String>,
    pub syntax_iterations_used: usize,
    pub syntax_errors_before: usize,
    pub syntax_errors_after: usize,
    pub strategy: Option<InferenceStrategy>,
    pub steps: Vec<ProofStep>,
    /// Steps the prover got through before the first failure.
    pub steps_processed: usize,
    pub report: CheckReport,
    pub feedback: Option<FeedbackBundle>,
    /// Stage or formalisation failure that ended the round early.
    pub failure: Option<String>,
    pub explanation_after: Vec<Fact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub problem_id: String,
    #[serde(default)]
    pub dataset: Option<String>,
    pub iterations: Vec<IterationRecord>,
    pub final_status: FinalStatus,
    /// Index of the last round run; 0 when only the initial check ran.
    pub total_iterations: usize,
    #[serde(default)]
    pub diagnostic: Option<String>,
}

impl RefinementTrace {
    pub fn final_explanation(&self) -> Option<&[Fact]> {
        self.iterations.last().map(|r| r.explanation_after.as_slice())
    }
}

#[derive(Clone, Debug)]
pub struct RefinerConfig {
    pub max_refinement_iterations: usize,
    pub syntax_bound: usize,
    pub timeout: Duration,
    pub backend: ProverBackend,
    /// Keep one prover session for all rounds of a problem.
    pub reuse_session: bool,
    pub classifier: ErrorClassifier,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            max_refinement_iterations: 10,
            syntax_bound: 3,
            timeout: DEFAULT_TIMEOUT,
            backend: ProverBackend::default(),
            reuse_session: false,
            classifier: ErrorClassifier::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {reason}")]
    StageFailed { stage: StageKind, reason: String },
    #[error("sentence {sentence_id} did not formalise: {reason}")]
    FormulaRejected { sentence_id: String, reason: String },
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("prover backend unavailable: {0}")]
    BackendUnavailable(#[from] ProverError),
}

impl PipelineError {
    pub(crate) fn stage(stage: StageKind, e: LlmError) -> PipelineError {
        PipelineError::StageFailed { stage, reason: e.to_string() }
    }
}
