use std::collections::BTreeSet;
use std::fmt::Write;

use super::{ProofStep, StepKind, TheoryDoc, TheoryError, ASSUMPTION, THEOREM};
use crate::logic::{render_prover, sanitize_identifier, SymbolStyle};

const STYLE: SymbolStyle = SymbolStyle::Escaped;

/// Theory names follow the identifier charset of the problem id.
pub fn theory_name(id: &str) -> String {
    sanitize_identifier(id)
}

fn comment(text: &str) -> String {
    format!("(* {} *)", text.trim().replace("*)", "* )").replace("(*", "( *"))
}

fn arrow_type(arity: usize) -> String {
    let mut t = String::new();
    for _ in 0..arity {
        t.push_str("entity \\<Rightarrow> ");
    }
    t.push_str("bool");
    t
}

/// Full theory text. A theory without proof steps ends its theorem with
/// `sorry`, which lets the prover check the statement alone.
pub fn render_theory(doc: &TheoryDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "theory {}\n  imports Main\nbegin\n", doc.name);
    out.push_str("typedecl entity\n");
    if !doc.signature.is_empty() {
        out.push_str("\nconsts\n");
        for sym in doc.signature.symbols() {
            let _ = writeln!(out, "  {} :: \"{}\"", sym.name, arrow_type(sym.arity));
        }
    }
    if !doc.axioms.is_empty() {
        out.push_str("\naxiomatization where\n");
        for (i, ax) in doc.axioms.iter().enumerate() {
            if i > 0 {
                out.push_str(" and\n\n");
            }
            let _ = writeln!(out, "  {}", comment(&format!("Explanation {}: {}", i + 1, ax.source_text)));
            let _ = write!(out, "  {}: \"{}\"", ax.name, render_prover(&ax.formula, STYLE));
        }
        out.push('\n');
    }

    let th = &doc.theorem;
    let _ = writeln!(out, "\ntheorem {THEOREM}:");
    if let Some(text) = &th.premise_text {
        let _ = writeln!(out, "  {}", comment(&format!("Premise: {text}")));
    }
    let asm = th
        .premise_assumption
        .as_ref()
        .map(|p| render_prover(p, STYLE))
        .unwrap_or_else(|| "True".to_string());
    let _ = writeln!(out, "  assumes {ASSUMPTION}: \"{asm}\"");
    let _ = writeln!(out, "  {}", comment(&format!("Hypothesis: {}", th.hypothesis_text)));
    let _ = writeln!(out, "  shows \"{}\"", render_prover(&th.goal, STYLE));
    if doc.proof.is_empty() {
        out.push_str("  sorry\n");
    } else {
        out.push_str("proof -\n");
        for step in &doc.proof {
            let _ = writeln!(out, "  {}", step_line(step));
        }
        out.push_str("qed\n");
    }
    out.push_str("\nend\n");
    out
}

pub(crate) fn step_line(step: &ProofStep) -> String {
    let mut line = String::new();
    let mut extra: Vec<&str> = step.facts_used.iter().map(String::as_str).collect();
    match step.kind {
        StepKind::FromAsmHave => {
            extra.retain(|f| *f != ASSUMPTION);
            let _ = write!(line, "from {ASSUMPTION} have \"{}\"", step.goal_text);
        }
        StepKind::ThenHave => {
            let _ = write!(line, "then have \"{}\"", step.goal_text);
        }
        StepKind::ThenShowThesis => line.push_str("then show ?thesis"),
    }
    if !extra.is_empty() {
        let _ = write!(line, " using {}", extra.join(" "));
    }
    let _ = write!(line, " by {}", step.tactic);
    line
}

/// Proof text for `steps`, one line per step, checking every cited fact
/// against `asm` and the declared axiom names.
pub fn render_proof(steps: &[ProofStep], axiom_names: &BTreeSet<&str>) -> Result<String, TheoryError> {
    if steps.is_empty() {
        return Err(TheoryError::EmptyProof);
    }
    if steps.last().map(|s| s.kind) != Some(StepKind::ThenShowThesis) {
        return Err(TheoryError::MissingThesis);
    }
    for (i, step) in steps.iter().enumerate() {
        if let Some(bad) =
            step.facts_used.iter().find(|f| f.as_str() != ASSUMPTION && !axiom_names.contains(f.as_str()))
        {
            return Err(TheoryError::DanglingFactReference { step_index: i, name: bad.clone() });
        }
    }
    Ok(steps.iter().map(step_line).collect::<Vec<_>>().join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::theory::TheoryDoc;

    #[test]
    fn violin_proof_lines() {
        let doc = fixtures::violin_theory();
        let text = render_proof(&doc.proof, &doc.axiom_names()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("from asm have \"Woman x \\<and> Violin y"));
        assert!(lines[0].ends_with("\" by blast"));
        assert!(lines[1].starts_with("then have \"Woman x \\<and> Instrument y"));
        assert!(lines[1].ends_with("using explanation_1 by blast"));
        assert_eq!(lines[2], "then show ?thesis using asm by blast");
    }

    #[test]
    fn single_step_proof() {
        let steps = [ProofStep::new(StepKind::ThenShowThesis, "?thesis", &["asm"])];
        assert_eq!(render_proof(&steps, &BTreeSet::new()).unwrap(), "then show ?thesis using asm by blast");
    }

    #[test]
    fn dangling_reference_is_reported() {
        let steps = [ProofStep::new(StepKind::ThenShowThesis, "?thesis", &["asm", "explanation_9"])];
        let names = BTreeSet::from(["explanation_1"]);
        assert_eq!(
            render_proof(&steps, &names).unwrap_err(),
            TheoryError::DanglingFactReference { step_index: 0, name: "explanation_9".into() }
        );
    }

    #[test]
    fn proof_shape_is_checked() {
        assert_eq!(render_proof(&[], &BTreeSet::new()).unwrap_err(), TheoryError::EmptyProof);
        let steps = [ProofStep::new(StepKind::ThenHave, "P x", &[])];
        assert_eq!(render_proof(&steps, &BTreeSet::new()).unwrap_err(), TheoryError::MissingThesis);
    }

    #[test]
    fn clause_order_of_violin_theorem() {
        let text = fixtures::violin_theory().render();
        let pos = |needle: &str| text.find(needle).unwrap_or_else(|| panic!("missing {needle}"));
        let order = [
            "theory violin",
            "imports Main",
            "typedecl entity",
            "consts",
            "axiomatization where",
            "explanation_1: \"\\<forall>x. Violin x \\<longrightarrow> Instrument x\"",
            "theorem hypothesis:",
            "(* Premise: A smiling woman",
            "assumes asm:",
            "(* Hypothesis: A woman is playing an instrument. *)",
            "shows \"\\<exists>x y e.",
            "proof -",
            "using explanation_1 by blast",
            "then show ?thesis using asm by blast",
            "qed",
            "end",
        ];
        for pair in order.windows(2) {
            assert!(pos(pair[0]) < pos(pair[1]), "{} should precede {}", pair[0], pair[1]);
        }
        assert_eq!(text.matches("explanation_1:").count(), 1);
    }

    #[test]
    fn no_axioms_means_no_axiomatization_block() {
        let mut doc = fixtures::violin_theory();
        doc.axioms.clear();
        doc.proof.clear();
        let doc = TheoryDoc::new(&doc.name, doc.axioms, doc.theorem);
        let text = doc.render();
        assert!(!text.contains("axiomatization"));
        assert!(text.contains("  sorry\n"));
    }

    #[test]
    fn render_twice_is_identical() {
        let doc = fixtures::violin_theory();
        assert_eq!(render_theory(&doc), render_theory(&doc.clone()));
    }

    #[test]
    fn absent_premise_assumes_true() {
        let doc = fixtures::violin_theory();
        let th = crate::theory::build_theorem(None, doc.theorem.goal.clone(), None, "h").unwrap();
        let text = TheoryDoc::new("t", vec![], th).render();
        assert!(text.contains("assumes asm: \"True\""));
    }

    #[test]
    fn comment_delimiters_are_neutralised() {
        assert_eq!(comment("a *) b (* c"), "(* a * ) b ( * c *)");
    }
}
