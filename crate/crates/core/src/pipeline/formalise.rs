use std::collections::HashMap;

use super::{Fact, NLIProblem, PipelineError, HYPOTHESIS_ID, PREMISE_ID};
use crate::llm::{extract_events, extract_logic, Gateway, StageKind};
use crate::logic::{parse_formula_unchecked, Formula, Syntax};
use crate::theory::{build_axioms, build_theorem, TheoryDoc};

/// Formulas already obtained for sentence texts, so unchanged sentences are
/// not sent to the model again.
#[derive(Clone, Debug, Default)]
pub struct FormulaCache {
    formulas: HashMap<String, Formula>,
}

impl FormulaCache {
    pub fn get(&self, text: &str) -> Option<&Formula> {
        self.formulas.get(text)
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }
}

pub(crate) fn numbered(sentences: &[(&str, &str)]) -> String {
    sentences.iter().map(|(id, text)| format!("{id}: {text}")).collect::<Vec<_>>().join("\n")
}

/// Builds the theory for `problem` with `explanation` as its facts. Only
/// sentences missing from `cache` go through DetectEvents and
/// SentenceToLogic.
pub fn formalise(
    problem: &NLIProblem,
    explanation: &[Fact],
    gateway: &Gateway,
    cache: &mut FormulaCache,
) -> Result<TheoryDoc, PipelineError> {
    let mut all: Vec<(&str, &str)> = Vec::new();
    if let Some(p) = &problem.premise_text {
        all.push((PREMISE_ID, p));
    }
    all.push((HYPOTHESIS_ID, &problem.hypothesis_text));
    all.extend(explanation.iter().map(|f| (f.id.as_str(), f.text.as_str())));

    let mut pending: Vec<(&str, &str)> = Vec::new();
    for &(id, text) in &all {
        if cache.get(text).is_none() && !pending.iter().any(|(_, t)| *t == text) {
            pending.push((id, text));
        }
    }

    if !pending.is_empty() {
        let sentences = numbered(&pending);
        let raw = gateway
            .complete(StageKind::DetectEvents, &[("sentences", &sentences)])
            .map_err(|e| PipelineError::stage(StageKind::DetectEvents, e))?;
        let events = extract_events(&raw).map_err(|e| PipelineError::stage(StageKind::DetectEvents, e))?;
        let events_text = pending
            .iter()
            .map(|(id, _)| {
                let words = events.iter().find(|(eid, _)| eid == id).map(|(_, w)| w.join(", ")).unwrap_or_default();
                format!("{id}: {}", if words.is_empty() { "(none)" } else { &words })
            })
            .collect::<Vec<_>>()
            .join("\n");

        let raw = gateway
            .complete(StageKind::SentenceToLogic, &[("sentences", &sentences), ("events", &events_text)])
            .map_err(|e| PipelineError::stage(StageKind::SentenceToLogic, e))?;
        let logic = extract_logic(&raw).map_err(|e| PipelineError::stage(StageKind::SentenceToLogic, e))?;
        let mut parsed = Vec::with_capacity(pending.len());
        for &(id, text) in &pending {
            let Some((_, formula_text)) = logic.iter().find(|(lid, _)| lid == id) else {
                return Err(PipelineError::StageFailed {
                    stage: StageKind::SentenceToLogic,
                    reason: format!("no formula for sentence {id}"),
                });
            };
            let f = parse_formula_unchecked(formula_text, Syntax::Canonical).map_err(|e| {
                PipelineError::FormulaRejected { sentence_id: id.to_string(), reason: e.to_string() }
            })?;
            parsed.push((text.to_string(), f));
        }
        cache.formulas.extend(parsed);
    }

    let formula = |text: &str| cache.get(text).cloned().expect("formalised above");
    let axioms = build_axioms(explanation.iter().map(|f| (f.id.as_str(), formula(&f.text), f.text.as_str())))?;
    let premise = problem.premise_text.as_deref().map(formula);
    let theorem = build_theorem(
        premise,
        formula(&problem.hypothesis_text),
        problem.premise_text.as_deref(),
        &problem.hypothesis_text,
    )?;
    Ok(TheoryDoc::new(&problem.id, axioms, theorem))
}
