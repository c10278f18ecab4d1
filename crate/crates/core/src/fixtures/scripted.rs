//! A deterministic stand-in for the language model. It answers each stage
//! from tables keyed by sentence text and by the explanation under
//! consideration, so recorded transcripts can be regenerated exactly.

use std::collections::HashMap;

use crate::llm::{ChatRequest, LlmError, StageKind};
use crate::logic::{parse_formula, render_prover, SymbolStyle};
use crate::pipeline::{Fact, NLIProblem, ProblemSource};

#[derive(Clone, Debug)]
pub struct ScriptedSentence {
    pub text: String,
    pub events: Vec<String>,
    /// Canonical formula text.
    pub logic: String,
}

/// What the model says while the explanation is `explanation`.
#[derive(Clone, Debug)]
pub struct ScriptedRound {
    pub explanation: Vec<String>,
    pub narrative: String,
    /// 1-based positions in `explanation`.
    pub relevant: Vec<usize>,
    pub redundant: Vec<usize>,
    /// Proof lines as ConstructProof would write them.
    pub proof: Vec<String>,
    /// The RefineExplanation answer, if the round is expected to fail.
    pub refined: Option<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct ScriptedProblem {
    pub problem: NLIProblem,
    pub sentences: Vec<ScriptedSentence>,
    pub rounds: Vec<ScriptedRound>,
}

#[derive(Clone, Debug, Default)]
pub struct ScriptedModel {
    sentences: HashMap<String, ScriptedSentence>,
    problems: Vec<ScriptedProblem>,
}

fn fenced(body: &str) -> String {
    format!("```\n{body}\n```")
}

/// Lines of the block that follows `header` in `prompt`, up to a blank line.
fn section<'a>(prompt: &'a str, header: &str) -> Vec<&'a str> {
    let Some(start) = prompt.find(header) else { return Vec::new() };
    prompt[start + header.len()..].lines().skip(1).take_while(|l| !l.trim().is_empty()).collect()
}

fn id_lines<'a>(lines: &[&'a str]) -> Vec<(&'a str, &'a str)> {
    lines.iter().filter_map(|l| l.split_once(": ")).collect()
}

fn line_value<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.trim().strip_prefix(prefix)).map(|v| v.trim())
}

/// `(* Label: text *)` comments of a rendered theory, in order.
fn comments<'a>(theory: &'a str, label: &str) -> Vec<&'a str> {
    theory
        .lines()
        .filter_map(|l| l.trim().strip_prefix("(* ")?.strip_suffix(" *)"))
        .filter_map(|c| {
            let (head, text) = c.split_once(": ")?;
            head.starts_with(label).then_some(text)
        })
        .collect()
}

/// Prover text of a canonical formula, for writing proof lines.
pub fn prover(canonical: &str) -> String {
    render_prover(&parse_formula(canonical).expect("scripted formula"), SymbolStyle::Escaped)
}

impl ScriptedModel {
    pub fn new(problems: Vec<ScriptedProblem>) -> ScriptedModel {
        let mut model = ScriptedModel::default();
        for p in problems {
            for s in &p.sentences {
                model.sentences.insert(s.text.clone(), s.clone());
            }
            model.problems.push(p);
        }
        model
    }

    pub fn problems(&self) -> &[ScriptedProblem] {
        &self.problems
    }

    fn problem_for(&self, hypothesis: &str) -> Option<&ScriptedProblem> {
        self.problems.iter().find(|p| p.problem.hypothesis_text == hypothesis)
    }

    fn round_for(&self, hypothesis: &str, texts: &[&str]) -> Option<&ScriptedRound> {
        self.problem_for(hypothesis)?.rounds.iter().find(|r| r.explanation.iter().map(String::as_str).eq(texts.iter().copied()))
    }

    /// The answer to `req`. Anything outside the tables gets an answer the
    /// extractor rejects, as a confused model's would be.
    pub fn respond(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let p = &req.prompt;
        let out = match req.stage {
            StageKind::DetectEvents => {
                let lines = id_lines(&section(p, "Sentences:"));
                let body = lines
                    .iter()
                    .map(|(id, text)| {
                        let events = self.sentences.get(*text).map(|s| s.events.join(", ")).unwrap_or_default();
                        format!("{id}: {events}").trim_end().to_string()
                    })
                    .collect::<Vec<_>>()
                    .join("\n");
                fenced(&body)
            }
            StageKind::SentenceToLogic => {
                let lines = id_lines(&section(p, "Sentences:"));
                let body = lines
                    .iter()
                    .filter_map(|(id, text)| self.sentences.get(*text).map(|s| format!("{id}: {}", s.logic)))
                    .collect::<Vec<_>>()
                    .join("\n");
                fenced(&body)
            }
            StageKind::RefineSyntax => {
                let theory = p.split_once("Theory:\n").map_or("", |(_, t)| t);
                let theory = theory.split("\n\nReturn the complete").next().unwrap_or(theory);
                fenced(theory.trim_end())
            }
            StageKind::RoughInference => {
                let hyp = line_value(p, "Hypothesis:").unwrap_or_default();
                let lines = id_lines(&section(p, "Explanation:"));
                let texts: Vec<&str> = lines.iter().map(|(_, t)| *t).collect();
                match self.round_for(hyp, &texts) {
                    Some(r) => {
                        let ids = |ks: &[usize]| {
                            ks.iter().filter_map(|k| lines.get(k - 1)).map(|(id, _)| *id).collect::<Vec<_>>().join(", ")
                        };
                        format!(
                            "{}\n\n{}",
                            r.narrative,
                            fenced(&format!("relevant: {}\nredundant: {}", ids(&r.relevant), ids(&r.redundant)))
                        )
                    }
                    None => "I cannot tell which sentences matter.".to_string(),
                }
            }
            StageKind::ConstructProof => {
                let hyp = comments(p, "Hypothesis").first().copied().unwrap_or_default();
                let texts = comments(p, "Explanation");
                match self.round_for(hyp, &texts) {
                    Some(r) => fenced(&r.proof.join("\n")),
                    None => "No proof comes to mind.".to_string(),
                }
            }
            StageKind::RefineExplanation => {
                let hyp = line_value(p, "Hypothesis:").unwrap_or_default();
                let current: Vec<&str> = id_lines(&section(p, "Current explanation:")).iter().map(|(_, t)| *t).collect();
                let refined = self.problem_for(hyp).and_then(|prob| {
                    prob.rounds.iter().find(|r| {
                        r.refined.is_some() && current.iter().all(|t| r.explanation.iter().any(|e| e == t))
                    })
                });
                match refined.and_then(|r| r.refined.as_ref()) {
                    Some(facts) => fenced(&facts.join("\n")),
                    None => "The explanation is fine as it is.".to_string(),
                }
            }
            StageKind::LogicToAxioms | StageKind::BuildTheoremCode | StageKind::FilterFacts => {
                return Err(LlmError::Config(format!("scripted model has no answer for {}", req.stage)))
            }
        };
        Ok(out)
    }
}

fn sentence(text: &str, events: &[&str], logic: &str) -> ScriptedSentence {
    ScriptedSentence {
        text: text.into(),
        events: events.iter().map(|e| e.to_string()).collect(),
        logic: logic.into(),
    }
}

fn round(explanation: &[&str], relevant: &[usize], proof: &[String], refined: Option<&[&str]>) -> ScriptedRound {
    ScriptedRound {
        explanation: explanation.iter().map(|s| s.to_string()).collect(),
        narrative: "The premise describes the situation; the explanation links it to the hypothesis.".into(),
        relevant: relevant.to_vec(),
        redundant: (1..=explanation.len()).filter(|k| !relevant.contains(k)).collect(),
        proof: proof.to_vec(),
        refined: refined.map(|r| r.iter().map(|s| s.to_string()).collect()),
    }
}

fn problem(id: &str, premise: &str, hypothesis: &str, explanation: &[&str]) -> NLIProblem {
    NLIProblem {
        id: id.into(),
        premise_text: Some(premise.into()),
        hypothesis_text: hypothesis.into(),
        explanation: explanation.iter().enumerate().map(|(i, t)| Fact::new(&format!("f{}", i + 1), t)).collect(),
        source: ProblemSource::Entailment,
        annotations: [("dataset".to_string(), "e-SNLI".to_string())].into(),
    }
}

fn have(goal: &str, using: &str) -> String {
    let using = if using.is_empty() { String::new() } else { format!(" using {using}") };
    format!("then have \"{}\"{using} by blast", prover(goal))
}

fn from_asm(goal: &str) -> String {
    format!("from asm have \"{}\" by blast", prover(goal))
}

const SHOW: &str = "then show ?thesis using asm by blast";

pub const LADY_PREMISE: &str =
    "A woman in black framed glasses peruses a photo album while sitting in a red wicker chair.";
pub const LADY_HYPOTHESIS: &str = "There is a lady with a book.";
const LADY_0: &str = "The lady is looking through a photo album which is a type of book.";
const LADY_1A: &str = "A woman can be referred to as a lady.";
const LADY_1B: &str = "A photo album is a type of book.";
const LADY_2C: &str = "If a woman is perusing a photo album, then the woman is with a book.";

/// The lady/book problem, refined twice before its proof goes through.
pub fn lady_book() -> ScriptedProblem {
    let sentences = vec![
        sentence(
            LADY_PREMISE,
            &["peruses", "sitting"],
            "Woman(x) ∧ Glasses(g) ∧ BlackFramed(g) ∧ In(x, g) ∧ PhotoAlbum(y) ∧ Peruse(e1) ∧ Agent(e1, x) ∧ \
             Patient(e1, y) ∧ Chair(c) ∧ Red(c) ∧ Wicker(c) ∧ Sitting(e2) ∧ Agent(e2, x) ∧ In(e2, c)",
        ),
        sentence(LADY_HYPOTHESIS, &[], "∃x y. Lady(x) ∧ Book(y) ∧ With(x, y)"),
        sentence(
            LADY_0,
            &["looking"],
            "∀x y e. Lady(x) ∧ PhotoAlbum(y) ∧ LookingThrough(e) ∧ Agent(e, x) ∧ Patient(e, y) → Book(y)",
        ),
        sentence(LADY_1A, &[], "∀x. Woman(x) → Lady(x)"),
        sentence(LADY_1B, &[], "∀x. PhotoAlbum(x) → Book(x)"),
        sentence(
            LADY_2C,
            &["perusing"],
            "∀x y e. Woman(x) ∧ PhotoAlbum(y) ∧ Peruse(e) ∧ Agent(e, x) ∧ Patient(e, y) → With(x, y)",
        ),
    ];
    let perusal = "Woman(x) ∧ PhotoAlbum(y) ∧ Peruse(e1) ∧ Agent(e1, x) ∧ Patient(e1, y)";
    let rounds = vec![
        round(
            &[LADY_0],
            &[1],
            &[from_asm(perusal), have("Lady(x) ∧ Book(y)", "explanation_1"), SHOW.into()],
            Some(&[LADY_1A, LADY_1B]),
        ),
        round(
            &[LADY_1A, LADY_1B],
            &[1, 2],
            &[from_asm("Woman(x) ∧ PhotoAlbum(y)"), have("Lady(x) ∧ Book(y)", "explanation_1 explanation_2"), SHOW.into()],
            Some(&[LADY_1A, LADY_1B, LADY_2C]),
        ),
        round(
            &[LADY_1A, LADY_1B, LADY_2C],
            &[1, 2, 3],
            &[
                from_asm(perusal),
                have("Lady(x) ∧ Book(y) ∧ With(x, y)", "explanation_1 explanation_2 explanation_3"),
                SHOW.into(),
            ],
            None,
        ),
    ];
    ScriptedProblem { problem: problem("esnli_lady_book", LADY_PREMISE, LADY_HYPOTHESIS, &[LADY_0]), sentences, rounds }
}

pub const BARTENDER_PREMISE: &str = "A male bartender dressed in all black with his sleeves rolled up to elbow \
                                     height making a drink in a martini glass.";
pub const BARTENDER_HYPOTHESIS: &str = "A person in black";
const BAR_0: &str = "A bartender, who is a person, is wearing black.";
const BAR_1A: &str = "A bartender is a person.";
const BAR_1B: &str = "If a person is wearing black, then the person is in black.";
const BAR_2B: &str = "If a person is dressed in black, then the person is in black.";

/// The bartender problem, refined twice before its proof goes through.
pub fn bartender() -> ScriptedProblem {
    let sentences = vec![
        sentence(
            BARTENDER_PREMISE,
            &["dressed", "making"],
            "Bartender(x) ∧ Male(x) ∧ Dressed(e1) ∧ Agent(e1, x) ∧ Black(b) ∧ In(e1, b) ∧ Sleeves(s) ∧ \
             RolledUp(s) ∧ Has(x, s) ∧ Making(e2) ∧ Agent(e2, x) ∧ Drink(d) ∧ Patient(e2, d) ∧ MartiniGlass(g) ∧ \
             In(d, g)",
        ),
        sentence(BARTENDER_HYPOTHESIS, &[], "∃x y. Person(x) ∧ Black(y) ∧ In(x, y)"),
        sentence(
            BAR_0,
            &["wearing"],
            "∀x. Bartender(x) → Person(x) ∧ (∃e y. Wearing(e) ∧ Agent(e, x) ∧ Black(y) ∧ Patient(e, y))",
        ),
        sentence(BAR_1A, &[], "∀x. Bartender(x) → Person(x)"),
        sentence(
            BAR_1B,
            &["wearing"],
            "∀x y e. Person(x) ∧ Wearing(e) ∧ Agent(e, x) ∧ Black(y) ∧ Patient(e, y) → In(x, y)",
        ),
        sentence(
            BAR_2B,
            &["dressed"],
            "∀x y e. Person(x) ∧ Dressed(e) ∧ Agent(e, x) ∧ Black(y) ∧ In(e, y) → In(x, y)",
        ),
    ];
    let start = from_asm("Bartender(x) ∧ Black(b)");
    let rounds = vec![
        round(
            &[BAR_0],
            &[1],
            &[start.clone(), have("Person(x) ∧ In(x, b)", "explanation_1"), SHOW.into()],
            Some(&[BAR_1A, BAR_1B]),
        ),
        round(
            &[BAR_1A, BAR_1B],
            &[1, 2],
            &[
                start.clone(),
                have("Person(x)", "explanation_1"),
                have("Person(x) ∧ Black(b) ∧ In(x, b)", "asm explanation_2"),
                SHOW.into(),
            ],
            Some(&[BAR_1A, BAR_2B]),
        ),
        round(
            &[BAR_1A, BAR_2B],
            &[1, 2],
            &[
                start,
                have("Person(x)", "explanation_1"),
                have("Person(x) ∧ Black(b) ∧ In(x, b)", "asm explanation_2"),
                SHOW.into(),
            ],
            None,
        ),
    ];
    ScriptedProblem {
        problem: problem("esnli_bartender", BARTENDER_PREMISE, BARTENDER_HYPOTHESIS, &[BAR_0]),
        sentences,
        rounds,
    }
}

/// The violin problem, valid as first formalised.
pub fn violin() -> ScriptedProblem {
    use super::{VIOLIN_FACT, VIOLIN_FACT_LOGIC, VIOLIN_HYPOTHESIS, VIOLIN_HYPOTHESIS_LOGIC, VIOLIN_PREMISE, VIOLIN_PREMISE_LOGIC};
    let sentences = vec![
        sentence(VIOLIN_PREMISE, &["smiling", "playing"], VIOLIN_PREMISE_LOGIC),
        sentence(VIOLIN_HYPOTHESIS, &["playing"], VIOLIN_HYPOTHESIS_LOGIC),
        sentence(VIOLIN_FACT, &[], VIOLIN_FACT_LOGIC),
    ];
    let proof = super::violin_proof().iter().map(|s| s.line()).collect::<Vec<_>>();
    let rounds = vec![round(&[VIOLIN_FACT], &[1], &proof, None)];
    ScriptedProblem { problem: problem("violin", VIOLIN_PREMISE, VIOLIN_HYPOTHESIS, &[VIOLIN_FACT]), sentences, rounds }
}

/// The three worked problems behind the shipped transcripts.
pub fn worked_examples() -> ScriptedModel {
    ScriptedModel::new(vec![violin(), lady_book(), bartender()])
}
