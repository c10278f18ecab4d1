//! Worked examples shared by tests, the acceptance suite and the CLI demo.

pub mod scripted;

use crate::logic::{parse_formula, render_prover, SymbolStyle};
use crate::theory::{build_axioms, build_theorem, ProofStep, StepKind, TheoryDoc};

pub const VIOLIN_PREMISE: &str = "A smiling woman is playing the violin in front of a turquoise background.";
pub const VIOLIN_HYPOTHESIS: &str = "A woman is playing an instrument.";
pub const VIOLIN_FACT: &str = "A violin is an instrument.";

pub const VIOLIN_PREMISE_LOGIC: &str = "Woman(x) ∧ Violin(y) ∧ Background(z) ∧ Turquoise(z) ∧ Smiling(x) ∧ \
     Playing(e) ∧ Agent(e, x) ∧ Patient(e, y) ∧ InFrontOf(x, z)";
pub const VIOLIN_HYPOTHESIS_LOGIC: &str =
    "∃x y e. Woman(x) ∧ Instrument(y) ∧ Playing(e) ∧ Agent(e, x) ∧ Patient(e, y)";
pub const VIOLIN_FACT_LOGIC: &str = "∀x. Violin(x) → Instrument(x)";

fn prover_text(canonical: &str) -> String {
    render_prover(&parse_formula(canonical).expect("fixture formula"), SymbolStyle::Escaped)
}

/// The three-step proof of the violin example.
pub fn violin_proof() -> Vec<ProofStep> {
    vec![
        ProofStep::new(
            StepKind::FromAsmHave,
            &prover_text("Woman(x) ∧ Violin(y) ∧ Playing(e) ∧ Agent(e, x) ∧ Patient(e, y)"),
            &["asm"],
        ),
        ProofStep::new(
            StepKind::ThenHave,
            &prover_text("Woman(x) ∧ Instrument(y) ∧ Playing(e) ∧ Agent(e, x) ∧ Patient(e, y)"),
            &["explanation_1"],
        ),
        ProofStep::new(StepKind::ThenShowThesis, "?thesis", &["asm"]),
    ]
}

/// Violin theory with its proof attached.
pub fn violin_theory() -> TheoryDoc {
    let axioms =
        build_axioms([("f1", parse_formula(VIOLIN_FACT_LOGIC).unwrap(), VIOLIN_FACT)]).expect("closed fact");
    let theorem = build_theorem(
        Some(parse_formula(VIOLIN_PREMISE_LOGIC).unwrap()),
        parse_formula(VIOLIN_HYPOTHESIS_LOGIC).unwrap(),
        Some(VIOLIN_PREMISE),
        VIOLIN_HYPOTHESIS,
    )
    .expect("well-formed theorem");
    TheoryDoc::new("violin", axioms, theorem).with_proof(violin_proof())
}
