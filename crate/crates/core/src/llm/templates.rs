//! Prompt templates, one per stage. `{name}` is a placeholder; `{{` and
//! `}}` stand for literal braces.

use super::{LlmError, StageKind};

const DETECT_EVENTS: &str = r#"You analyse English sentences for a neo-Davidsonian logical translation, in which verbs and other event-denoting words become event variables linked to their participants by role predicates such as Agent and Patient.

For each sentence below, list the words that denote events or actions. Sentences that describe no event get an empty list.

Sentences:
{sentences}

Answer with one line per sentence inside a single fenced block, in the form `id: word, word`:
```
f1: playing
f2:
```"#;

const SENTENCE_TO_LOGIC: &str = r#"Translate each sentence into first-order logic using neo-Davidsonian event semantics.

Rules:
- Use only predicates applied to variables, e.g. `Woman(x)`, `Agent(e, x)`. No functions, constants or equality.
- Connectives: ∀ ∃ ∧ ∨ → ¬ with parentheses as needed; binders are written `∀x y. body`.
- Each event word becomes an event variable `e` with a predicate for the event and role predicates `Agent(e, x)`, `Patient(e, y)`.
- General statements (ids starting with `f`) are closed formulas, usually `∀x. A(x) → B(x)`.
- The premise is a plain conjunction of atoms whose variables stay free.
- The hypothesis is closed; quantify its variables existentially.
- Reuse the same predicate name, with the same number of arguments, for the same concept throughout.

Event words per sentence:
{events}

Sentences:
{sentences}

Answer with one line per sentence inside a single fenced block, in the form `id: formula`:
```
f1: ∀x. Violin(x) → Instrument(x)
```"#;

const LOGIC_TO_AXIOMS: &str = r#"Write the Isabelle/HOL declarations for the following logical forms: a `typedecl entity`, one `consts` entry `Name :: "entity ⇒ bool"` (one `entity ⇒` per argument) per predicate, and an `axiomatization where` block naming the formulas `explanation_1`, `explanation_2`, ... in order, each preceded by a comment with its source sentence.

Logical forms:
{axioms}

Return only the declarations inside a single fenced block."#;

const BUILD_THEOREM_CODE: &str = r#"Write the Isabelle/HOL theorem for this inference problem. The theorem is named `hypothesis`; the premise becomes the assumption `asm` and the hypothesis the `shows` clause. Precede each with a comment quoting its sentence. End the theorem with `sorry`.

Premise: {premise}
Premise logic: {premise_logic}
Hypothesis: {hypothesis}
Hypothesis logic: {hypothesis_logic}

Return only the theorem inside a single fenced block."#;

const REFINE_SYNTAX: &str = r#"The Isabelle/HOL theory below does not type-check. Fix the reported errors and change nothing else.

Two kinds of error are common:

1. Type unification errors: a predicate is used with a different number of arguments than declared.
   Error: Type unification failed: Clash of types "entity ⇒ bool" and "bool"
   Cause: `consts Book :: "entity ⇒ bool"` but the axiom says `Book x y`.
   Fix: use `Book y` (or change the declaration when the two-argument reading is intended everywhere).

2. Other syntax errors: unbalanced parentheses, undeclared names, or invalid symbols.
   Error: Inner syntax error: Failed to parse prop
   Cause: `"\<forall>x. (Lady x \<longrightarrow> Woman x"` is missing a closing parenthesis.
   Fix: `"\<forall>x. (Lady x \<longrightarrow> Woman x)"`.

Errors reported by the prover (line numbers refer to the theory text):
{errors}

Theory:
{theory}

Return the complete corrected theory inside a single fenced block."#;

const ROUGH_INFERENCE: &str = r#"Before writing a formal proof, reason informally about how the explanation supports the hypothesis.

Premise: {premise}
Hypothesis: {hypothesis}
Explanation:
{explanation}

Describe step by step how the premise and the explanatory sentences lead to the hypothesis. Then classify the explanatory sentences: list the ids needed for the inference as relevant, and ids that are true but not needed as redundant. Finish with a fenced block:
```
relevant: f1, f2
redundant: f3
```"#;

const CONSTRUCT_PROOF: &str = r#"Write an Isabelle/HOL proof for the theorem in the theory below, following the inference strategy.

Use a linear proof of this shape, one step per line:
  from asm have "..." by blast
  then have "..." using explanation_1 by blast
  then show ?thesis using asm by blast

Each step cites only `asm` and axiom names declared in the theory. The last step is `then show ?thesis`.

Inference strategy:
{strategy}

Theory:
{theory}

Return only the proof steps inside a single fenced block."#;

const FILTER_FACTS: &str = r#"An explanation was used to prove a hypothesis. Decide which explanatory sentences to keep: keep a sentence if the proof uses it or the strategy marks it relevant; drop redundant or unrelated sentences.

Explanation:
{explanation}

Inference strategy:
{strategy}

Proof:
{proof}

Answer inside a single fenced block:
```
keep: f1, f2
```"#;

const REFINE_EXPLANATION: &str = r#"The explanation below does not logically entail the hypothesis: the theorem prover rejected the proof. Rewrite the explanatory sentences so that, together with the premise, they entail the hypothesis.

Premise: {premise}
Hypothesis: {hypothesis}

Current explanation:
{explanation}

Prover error:
{error}

Failed proof step:
{failed_step}

Explanatory sentences used by the failed step:
{relevant}

Inference strategy:
{strategy}

Keep sentences general and simple, one fact per sentence. You may add missing facts, rewrite wrong ones, and drop irrelevant ones. Return the complete new explanation inside a single fenced block, one sentence per line."#;

pub fn template(stage: StageKind) -> &'static str {
    match stage {
        StageKind::DetectEvents => DETECT_EVENTS,
        StageKind::SentenceToLogic => SENTENCE_TO_LOGIC,
        StageKind::LogicToAxioms => LOGIC_TO_AXIOMS,
        StageKind::BuildTheoremCode => BUILD_THEOREM_CODE,
        StageKind::RefineSyntax => REFINE_SYNTAX,
        StageKind::RoughInference => ROUGH_INFERENCE,
        StageKind::ConstructProof => CONSTRUCT_PROOF,
        StageKind::FilterFacts => FILTER_FACTS,
        StageKind::RefineExplanation => REFINE_EXPLANATION,
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(tpl: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = tpl;
    while let Some(i) = rest.find(['{', '}']) {
        out.push(Piece::Text(&rest[..i]));
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push(Piece::Text("{"));
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push(Piece::Text("}"));
            rest = after;
        } else if let Some(name) = tail[1..]
            .find('}')
            .map(|j| &tail[1..1 + j])
            .filter(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_lowercase() || b == b'_'))
        {
            out.push(Piece::Slot(name));
            rest = &tail[name.len() + 2..];
        } else {
            out.push(Piece::Text(&tail[..1]));
            rest = &tail[1..];
        }
    }
    out.push(Piece::Text(rest));
    out
}

/// Placeholder names in order of first appearance.
pub fn placeholders(tpl: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for p in pieces(tpl) {
        if let Piece::Slot(n) = p {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

/// Substitutes every placeholder; extra bindings are ignored.
pub fn render_template(tpl: &str, bindings: &[(&str, &str)]) -> Result<String, LlmError> {
    let mut out = String::with_capacity(tpl.len());
    for p in pieces(tpl) {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => {
                let value = bindings
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| LlmError::TemplateUnbound(name.to_string()))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_stage_has_placeholders_and_a_fence() {
        for stage in StageKind::ALL {
            let t = template(stage);
            assert!(!placeholders(t).is_empty(), "{stage}");
            assert!(t.contains("fenced block"), "{stage}");
        }
        assert_eq!(placeholders(template(StageKind::RefineSyntax)), ["errors", "theory"]);
    }

    #[test]
    fn rendering_substitutes_and_unescapes() {
        let out = render_template("a {x} {{y}} {x}", &[("x", "1"), ("unused", "z")]).unwrap();
        assert_eq!(out, "a 1 {y} 1");
        // Values are inserted verbatim, braces included.
        assert_eq!(render_template("{x}", &[("x", "{y}")]).unwrap(), "{y}");
        // A brace that does not open a placeholder is literal.
        assert_eq!(render_template("set {A, B}", &[]).unwrap(), "set {A, B}");
    }

    #[test]
    fn unbound_placeholder_is_named() {
        match render_template("{sentence}", &[]) {
            Err(LlmError::TemplateUnbound(n)) => assert_eq!(n, "sentence"),
            other => panic!("{other:?}"),
        }
    }
}
