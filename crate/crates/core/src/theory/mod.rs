//! Prover theories: axioms from explanation facts, a `hypothesis` theorem
//! whose assumption is the premise, and a linear `have`/`show` proof.

mod parse;
mod render;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{free_variables, Formula, Signature};

pub(crate) use parse::line_of;
pub use parse::{parse_theory, ParsedTheory, Span, TheoryLayout, TheoryParseError};
pub use render::{render_proof, render_theory, theory_name};

/// Name of the premise assumption inside the theorem.
pub const ASSUMPTION: &str = "asm";
/// Name of the single theorem in every theory.
pub const THEOREM: &str = "hypothesis";
pub const DEFAULT_TACTIC: &str = "blast";

pub fn axiom_name(k: usize) -> String {
    format!("explanation_{k}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axiom {
    pub name: String,
    pub formula: Formula,
    pub source_text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremBlock {
    /// Quantifier-free conjunction of atoms; its free variables act as
    /// fixed individuals. `None` renders as `True`.
    pub premise_assumption: Option<Formula>,
    pub goal: Formula,
    pub premise_text: Option<String>,
    pub hypothesis_text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    FromAsmHave,
    ThenHave,
    ThenShowThesis,
}

/// One line of a linear proof: `show X using Y by Z`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    pub kind: StepKind,
    /// Claim in prover inner syntax; `?thesis` for the closing step.
    pub goal_text: String,
    pub facts_used: Vec<String>,
    pub tactic: String,
}

impl ProofStep {
    pub fn new(kind: StepKind, goal_text: &str, facts_used: &[&str]) -> Self {
        ProofStep {
            kind,
            goal_text: goal_text.to_string(),
            facts_used: facts_used.iter().map(|s| s.to_string()).collect(),
            tactic: DEFAULT_TACTIC.to_string(),
        }
    }

    /// The step as it appears inside `proof - ... qed`.
    pub fn line(&self) -> String {
        render::step_line(self)
    }

    /// Facts the step draws on, with the implicit `asm` of a `from asm` step.
    pub fn cited_facts(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        if self.kind == StepKind::FromAsmHave {
            out.push(ASSUMPTION);
        }
        for f in &self.facts_used {
            if !out.contains(&f.as_str()) {
                out.push(f);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoryDoc {
    pub name: String,
    pub signature: Signature,
    pub axioms: Vec<Axiom>,
    pub theorem: TheoremBlock,
    pub proof: Vec<ProofStep>,
}

impl TheoryDoc {
    /// Assembles a theory; the signature is taken from first use of each
    /// predicate in axiom, premise, goal order.
    pub fn new(name: &str, axioms: Vec<Axiom>, theorem: TheoremBlock) -> Self {
        let formulas = axioms
            .iter()
            .map(|a| &a.formula)
            .chain(theorem.premise_assumption.iter())
            .chain(std::iter::once(&theorem.goal));
        TheoryDoc {
            name: theory_name(name),
            signature: Signature::lenient(formulas),
            axioms,
            theorem,
            proof: Vec::new(),
        }
    }

    pub fn with_proof(mut self, steps: Vec<ProofStep>) -> Self {
        self.proof = steps;
        self
    }

    pub fn axiom_names(&self) -> BTreeSet<&str> {
        self.axioms.iter().map(|a| a.name.as_str()).collect()
    }

    /// The axioms cited anywhere in the proof (B ⊆ A), in declaration order.
    pub fn used_axioms(&self) -> Vec<&Axiom> {
        let cited: BTreeSet<&str> =
            self.proof.iter().flat_map(|s| s.facts_used.iter().map(String::as_str)).collect();
        self.axioms.iter().filter(|a| cited.contains(a.name.as_str())).collect()
    }

    pub fn render(&self) -> String {
        render_theory(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TheoryError {
    #[error("fact {0} formalises to a formula with free variables")]
    OpenFormula(String),
    #[error("premise must be a quantifier-free conjunction of atoms")]
    MalformedPremise,
    #[error("hypothesis formula has free variables: {0:?}")]
    OpenGoal(Vec<String>),
    #[error("proof step {step_index} cites undeclared fact {name}")]
    DanglingFactReference { step_index: usize, name: String },
    #[error("proof has no steps")]
    EmptyProof,
    #[error("last proof step must be `then show ?thesis`")]
    MissingThesis,
}

/// Turns formalised facts into `explanation_k` axioms, k counting from 1 in
/// input order. Nested binders of one kind are merged.
pub fn build_axioms<'a>(
    facts: impl IntoIterator<Item = (&'a str, Formula, &'a str)>,
) -> Result<Vec<Axiom>, TheoryError> {
    facts
        .into_iter()
        .enumerate()
        .map(|(i, (fact_id, formula, source))| {
            if !formula.is_closed() {
                return Err(TheoryError::OpenFormula(fact_id.to_string()));
            }
            Ok(Axiom {
                name: axiom_name(i + 1),
                formula: formula.flatten_quantifiers(),
                source_text: source.to_string(),
            })
        })
        .collect()
}

pub fn build_theorem(
    premise: Option<Formula>,
    hypothesis: Formula,
    premise_text: Option<&str>,
    hypothesis_text: &str,
) -> Result<TheoremBlock, TheoryError> {
    if let Some(p) = &premise {
        if !p.is_quantifier_free() || !p.is_atom_conjunction() {
            return Err(TheoryError::MalformedPremise);
        }
    }
    let open = free_variables(&hypothesis);
    if !open.is_empty() {
        return Err(TheoryError::OpenGoal(open.into_iter().map(|v| v.name().to_string()).collect()));
    }
    Ok(TheoremBlock {
        premise_assumption: premise,
        goal: hypothesis.flatten_quantifiers(),
        premise_text: premise_text.map(str::to_string),
        hypothesis_text: hypothesis_text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;

    #[test]
    fn violin_axiom_is_explanation_1() {
        let f = parse_formula("∀x. Violin(x) → Instrument(x)").unwrap();
        let axioms = build_axioms([("f1", f.clone(), "A violin is an instrument.")]).unwrap();
        assert_eq!(axioms.len(), 1);
        assert_eq!(axioms[0].name, "explanation_1");
        assert_eq!(axioms[0].formula, f);
        assert_eq!(axioms[0].source_text, "A violin is an instrument.");
    }

    #[test]
    fn axioms_are_numbered_in_order() {
        let a = parse_formula("∀x. A(x) → B(x)").unwrap();
        let b = parse_formula("∀x. B(x) → C(x)").unwrap();
        let axioms = build_axioms([("f7", a, "one"), ("f2", b, "two")]).unwrap();
        let names: Vec<_> = axioms.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["explanation_1", "explanation_2"]);
    }

    #[test]
    fn open_fact_is_rejected() {
        let f = parse_formula("Violin(x) → Instrument(x)").unwrap();
        assert_eq!(
            build_axioms([("f3", f, "open")]).unwrap_err(),
            TheoryError::OpenFormula("f3".into())
        );
    }

    #[test]
    fn quantified_premise_is_malformed() {
        let p = parse_formula("∃x. Woman(x)").unwrap();
        let h = parse_formula("∃x. Woman(x)").unwrap();
        assert_eq!(build_theorem(Some(p), h, None, "h").unwrap_err(), TheoryError::MalformedPremise);
        let q = parse_formula("Woman(x) ∨ Man(x)").unwrap();
        let h = parse_formula("∃x. Woman(x)").unwrap();
        assert_eq!(build_theorem(Some(q), h, None, "h").unwrap_err(), TheoryError::MalformedPremise);
    }

    #[test]
    fn open_goal_is_rejected() {
        let h = parse_formula("Woman(x)").unwrap();
        assert!(matches!(build_theorem(None, h, None, "h"), Err(TheoryError::OpenGoal(v)) if v == ["x"]));
    }

    #[test]
    fn used_axioms_is_b_subset() {
        let doc = crate::fixtures::violin_theory();
        let used: Vec<_> = doc.used_axioms().iter().map(|a| a.name.clone()).collect();
        assert_eq!(used, ["explanation_1"]);
    }
}
