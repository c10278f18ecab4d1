use std::collections::BTreeSet;

use super::formalise::numbered;
use super::{
    Fact, FailedStep, FeedbackBundle, InferenceStrategy, NLIProblem, PipelineError, RefinerConfig,
};
use crate::llm::{extract_facts, extract_proof, extract_strategy, extract_theory_text, Gateway, StageKind};
use crate::prover::{locate_failed_step, CheckReport, ErrorClassifier, ProverError, SessionHandle};
use crate::theory::{axiom_name, parse_theory, render_proof, ParsedTheory, ProofStep, TheoryDoc, TheoryError};

/// Result of the syntax sub-loop: the last theory text checked and its
/// report.
#[derive(Clone, Debug)]
pub struct SyntaxOutcome {
    pub text: String,
    pub iterations_used: usize,
    pub errors_before: usize,
    pub errors_after: usize,
    pub report: CheckReport,
    /// `None` when the final text is not a theory the reader understands.
    pub parsed: Option<ParsedTheory>,
}

impl SyntaxOutcome {
    pub fn is_clean(&self) -> bool {
        self.report.is_valid() && self.parsed.is_some()
    }
}

fn syntax_errors(report: &CheckReport, text: &str, classifier: &ErrorClassifier) -> usize {
    let layout = parse_theory(text).ok().map(|p| p.layout);
    report.errors().filter(|m| classifier.classify(m, layout.as_ref()).is_syntax()).count()
}

fn header_name(text: &str) -> Option<String> {
    let rest = text.trim_start().strip_prefix("theory")?;
    rest.split_whitespace().next().map(str::to_string)
}

fn error_listing(report: &CheckReport) -> String {
    report
        .errors()
        .map(|m| match m.span {
            Some(s) => format!("line {}: {}", s.line, m.text),
            None => m.text.clone(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Checks `doc` without its proof and asks RefineSyntax to repair syntax
/// and type errors, at most `cfg.syntax_bound` times.
pub fn refine_syntax_loop(
    doc: &TheoryDoc,
    handle: &mut SessionHandle,
    gateway: &Gateway,
    cfg: &RefinerConfig,
) -> Result<SyntaxOutcome, ProverError> {
    let statement = doc.clone().with_proof(Vec::new());
    let mut name = statement.name.clone();
    let mut text = statement.render();
    let mut report = handle.check_text(&name, &text, cfg.timeout)?;
    let errors_before = syntax_errors(&report, &text, &cfg.classifier);
    let mut errors = errors_before;
    let mut used = 0;
    while errors > 0 && used < cfg.syntax_bound {
        used += 1;
        let listing = error_listing(&report);
        let revised = gateway
            .complete(StageKind::RefineSyntax, &[("errors", &listing), ("theory", &text)])
            .and_then(|raw| extract_theory_text(StageKind::RefineSyntax, &raw));
        match revised {
            Ok(t) => {
                text = t;
                name = header_name(&text).unwrap_or(name);
                report = handle.check_text(&name, &text, cfg.timeout)?;
                errors = syntax_errors(&report, &text, &cfg.classifier);
            }
            Err(e) => log::warn!("{}: syntax repair {used} failed: {e}", doc.name),
        }
    }
    let parsed = parse_theory(&text).ok();
    Ok(SyntaxOutcome { text, iterations_used: used, errors_before, errors_after: errors, report, parsed })
}

fn explanation_lines(explanation: &[Fact]) -> String {
    if explanation.is_empty() {
        return "(none)".into();
    }
    numbered(&explanation.iter().map(|f| (f.id.as_str(), f.text.as_str())).collect::<Vec<_>>())
}

fn strategy_text(s: &InferenceStrategy) -> String {
    format!(
        "{}\nrelevant: {}\nredundant: {}",
        s.narrative,
        s.relevant_fact_ids.join(", "),
        s.redundant_fact_ids.join(", ")
    )
}

/// Maps a strategy id to a fact id: either the id itself or an axiom name
/// `explanation_k` naming the k-th fact.
fn resolve_id(raw: &str, explanation: &[Fact]) -> Option<String> {
    if let Some(f) = explanation.iter().find(|f| f.id == raw) {
        return Some(f.id.clone());
    }
    let k: usize = raw.strip_prefix("explanation_")?.parse().ok()?;
    explanation.get(k.checked_sub(1)?).map(|f| f.id.clone())
}

/// RoughInference. Unknown ids are dropped; an id listed both ways counts
/// as relevant.
pub fn rough_inference(
    problem: &NLIProblem,
    explanation: &[Fact],
    gateway: &Gateway,
) -> Result<InferenceStrategy, PipelineError> {
    let stage = StageKind::RoughInference;
    let raw = gateway
        .complete(
            stage,
            &[
                ("premise", problem.premise_text.as_deref().unwrap_or("(none)")),
                ("hypothesis", &problem.hypothesis_text),
                ("explanation", &explanation_lines(explanation)),
            ],
        )
        .map_err(|e| PipelineError::stage(stage, e))?;
    let raw = extract_strategy(&raw).map_err(|e| PipelineError::stage(stage, e))?;
    let mut relevant: Vec<String> = Vec::new();
    for id in raw.relevant.iter().filter_map(|r| resolve_id(r, explanation)) {
        if !relevant.contains(&id) {
            relevant.push(id);
        }
    }
    let mut redundant: Vec<String> = Vec::new();
    for id in raw.redundant.iter().filter_map(|r| resolve_id(r, explanation)) {
        if !relevant.contains(&id) && !redundant.contains(&id) {
            redundant.push(id);
        }
    }
    Ok(InferenceStrategy { narrative: raw.narrative, relevant_fact_ids: relevant, redundant_fact_ids: redundant })
}

/// ConstructProof on the statement-only theory.
pub fn construct_proof(
    doc: &TheoryDoc,
    strategy: &InferenceStrategy,
    gateway: &Gateway,
) -> Result<Vec<ProofStep>, PipelineError> {
    let stage = StageKind::ConstructProof;
    let theory = doc.clone().with_proof(Vec::new()).render();
    let raw = gateway
        .complete(stage, &[("strategy", &strategy_text(strategy)), ("theory", &theory)])
        .map_err(|e| PipelineError::stage(stage, e))?;
    extract_proof(&raw).map_err(|e| PipelineError::stage(stage, e))
}

/// Attaches `steps` to `doc` once every cited name is declared.
pub fn attach_proof(doc: TheoryDoc, steps: Vec<ProofStep>) -> Result<TheoryDoc, TheoryError> {
    render_proof(&steps, &doc.axiom_names())?;
    Ok(doc.with_proof(steps))
}

/// RoughInference, then ConstructProof, then the proof attached to `doc`.
pub fn infer_and_prove(
    problem: &NLIProblem,
    explanation: &[Fact],
    doc: TheoryDoc,
    gateway: &Gateway,
) -> Result<(InferenceStrategy, Vec<ProofStep>, TheoryDoc), PipelineError> {
    let strategy = rough_inference(problem, explanation, gateway)?;
    let steps = construct_proof(&doc, &strategy, gateway)?;
    let proved = attach_proof(doc, steps.clone())?;
    Ok((strategy, steps, proved))
}

/// Keeps the facts some step cites by axiom name or the strategy marks
/// relevant, in input order.
pub fn filter_facts(explanation: &[Fact], strategy: &InferenceStrategy, steps: &[ProofStep]) -> Vec<Fact> {
    let cited: BTreeSet<&str> = steps.iter().flat_map(|s| s.facts_used.iter().map(String::as_str)).collect();
    explanation
        .iter()
        .enumerate()
        .filter(|(i, f)| cited.contains(axiom_name(i + 1).as_str()) || strategy.relevant_fact_ids.contains(&f.id))
        .map(|(_, f)| f.clone())
        .collect()
}

/// Feedback for a failed check of `doc`. The failed step and its axioms
/// are filled in only when the first error lies on a proof step.
pub fn assemble_feedback(
    report: &CheckReport,
    doc: Option<&TheoryDoc>,
    strategy: Option<InferenceStrategy>,
) -> FeedbackBundle {
    let error_message = match &report.first_error {
        Some(e) => match e.message.span {
            Some(s) => format!("line {}: {}", s.line, e.message.text),
            None => e.message.text.clone(),
        },
        None => String::new(),
    };
    let mut bundle = FeedbackBundle { error_message, failed_step: None, strategy, relevant_axioms: Vec::new() };
    let Some(doc) = doc else { return bundle };
    match locate_failed_step(report, doc) {
        Ok(Some((index, names))) => {
            bundle.failed_step = Some(FailedStep { index, step: doc.proof[index].clone() });
            bundle.relevant_axioms =
                names.iter().filter_map(|n| doc.axioms.iter().find(|a| &a.name == n)).cloned().collect();
        }
        Ok(None) => {}
        Err(e) => log::debug!("{}: {e}", doc.name),
    }
    bundle
}

/// Hands out fact ids not used by any earlier explanation of a problem.
#[derive(Clone, Debug)]
pub struct FactIds {
    used: BTreeSet<String>,
    next: usize,
}

impl FactIds {
    pub fn new(problem: &NLIProblem) -> FactIds {
        FactIds { used: problem.explanation.iter().map(|f| f.id.clone()).collect(), next: 1 }
    }

    pub fn fresh(&mut self) -> String {
        loop {
            let id = format!("f{}", self.next);
            self.next += 1;
            if self.used.insert(id.clone()) {
                return id;
            }
        }
    }

    /// Ids for `texts`: a text equal to one in `previous` keeps that
    /// fact's id, anything else gets a fresh one.
    pub fn assign(&mut self, texts: &[String], previous: &[Fact]) -> Vec<Fact> {
        let mut taken: BTreeSet<&str> = BTreeSet::new();
        let mut out = Vec::with_capacity(texts.len());
        for t in texts {
            let reuse = previous.iter().find(|f| &f.text == t && !taken.contains(f.id.as_str()));
            let id = match reuse {
                Some(f) => {
                    taken.insert(&f.id);
                    f.id.clone()
                }
                None => self.fresh(),
            };
            out.push(Fact { id, text: t.clone() });
        }
        out
    }
}

/// RefineExplanation with the feedback of a failed round. `current` is the
/// explanation after filtering; `previous` supplies ids for unchanged texts.
pub fn refine_explanation(
    bundle: &FeedbackBundle,
    problem: &NLIProblem,
    current: &[Fact],
    previous: &[Fact],
    gateway: &Gateway,
    ids: &mut FactIds,
) -> Result<Vec<Fact>, PipelineError> {
    let stage = StageKind::RefineExplanation;
    let failed_step = match &bundle.failed_step {
        Some(f) => format!("step {}: {}", f.index + 1, f.step.line()),
        None => "(the theory failed before its proof)".to_string(),
    };
    let relevant = if bundle.relevant_axioms.is_empty() {
        "(none)".to_string()
    } else {
        bundle.relevant_axioms.iter().map(|a| format!("{}: {}", a.name, a.source_text)).collect::<Vec<_>>().join("\n")
    };
    let strategy = bundle.strategy.as_ref().map(strategy_text).unwrap_or_else(|| "(none)".into());
    let raw = gateway
        .complete(
            stage,
            &[
                ("premise", problem.premise_text.as_deref().unwrap_or("(none)")),
                ("hypothesis", &problem.hypothesis_text),
                ("explanation", &explanation_lines(current)),
                ("error", &bundle.error_message),
                ("failed_step", &failed_step),
                ("relevant", &relevant),
                ("strategy", &strategy),
            ],
        )
        .map_err(|e| PipelineError::stage(stage, e))?;
    let texts = extract_facts(&raw).map_err(|e| PipelineError::stage(stage, e))?;
    Ok(ids.assign(&texts, previous))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::StepKind;

    fn facts(n: usize) -> Vec<Fact> {
        (1..=n).map(|i| Fact::new(&format!("f{i}"), &format!("fact {i}"))).collect()
    }

    #[test]
    fn filter_keeps_cited_or_relevant() {
        let e = facts(2);
        let s = InferenceStrategy { redundant_fact_ids: vec!["f2".into()], ..Default::default() };
        let steps = [ProofStep::new(StepKind::ThenShowThesis, "?thesis", &["asm", "explanation_1"])];
        assert_eq!(filter_facts(&e, &s, &steps), vec![e[0].clone()]);
        let s = InferenceStrategy { relevant_fact_ids: vec!["f2".into()], ..Default::default() };
        assert_eq!(filter_facts(&e, &s, &steps), e);
        assert!(filter_facts(&[], &s, &steps).is_empty());
    }

    #[test]
    fn resolve_accepts_ids_and_axiom_names() {
        let e = facts(3);
        assert_eq!(resolve_id("f2", &e).as_deref(), Some("f2"));
        assert_eq!(resolve_id("explanation_3", &e).as_deref(), Some("f3"));
        assert_eq!(resolve_id("explanation_0", &e), None);
        assert_eq!(resolve_id("explanation_4", &e), None);
        assert_eq!(resolve_id("g", &e), None);
    }

    #[test]
    fn fresh_ids_skip_used_ones() {
        let p = NLIProblem {
            id: "p".into(),
            premise_text: None,
            hypothesis_text: "h".into(),
            explanation: facts(2),
            source: Default::default(),
            annotations: Default::default(),
        };
        let mut ids = FactIds::new(&p);
        let out = ids.assign(&["fact 2".into(), "new".into(), "fact 2".into()], &p.explanation);
        let got: Vec<&str> = out.iter().map(|f| f.id.as_str()).collect();
        assert_eq!(got, ["f2", "f3", "f4"]);
        assert_eq!(ids.fresh(), "f5");
    }

    #[test]
    fn header_name_reads_first_word() {
        assert_eq!(header_name("theory lady_book\n imports Main").as_deref(), Some("lady_book"));
        assert_eq!(header_name("begin"), None);
    }
}
