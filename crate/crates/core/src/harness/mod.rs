//! Dataset ingestion, batch execution and run reports.

mod batch;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::pipeline::{Fact, NLIProblem, ProblemSource};

pub use batch::{load_traces, run_batch, trace_file_name, TraceWriter};
pub use report::{aggregate, DatasetReport, RunReport, StepPoint, TimePoint, UNLABELLED};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: missing or invalid field `{field}`")]
    SchemaError { line: usize, field: String },
    #[error("line {line}: duplicate problem id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {reason}")]
    Trace { path: String, reason: String },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> HarnessError {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Entailment,
    Mcqa,
}

impl Format {
    /// Multiple-choice records are the ones with a `question`.
    pub fn detect(record: &Value) -> Format {
        if record.get("question").is_some() {
            Format::Mcqa
        } else {
            Format::Entailment
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCQAItem {
    pub id: String,
    pub question: String,
    pub choices: Vec<Choice>,
    pub answer_label: String,
    pub context: Option<String>,
    pub explanation: Vec<Fact>,
    pub annotations: BTreeMap<String, String>,
}

impl MCQAItem {
    pub fn answer(&self) -> Option<&Choice> {
        self.choices.iter().find(|c| c.label == self.answer_label)
    }
}

const WH_WORDS: [&str; 9] = ["what", "which", "who", "whom", "whose", "where", "when", "why", "how"];
const DO_SUPPORT: [&str; 3] = ["do", "does", "did"];

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Declarative hypothesis from a question and its answer. With exactly one
/// wh-word the answer takes its place (a following do/does/did is dropped
/// and the answer moves to the end); otherwise the answer is appended.
pub fn hypothesis_from_question(question: &str, answer: &str) -> String {
    let q = question.trim().trim_end_matches(['?', ' ']).trim_end();
    let answer = answer.trim();
    let words: Vec<&str> = q.split_whitespace().collect();
    let is_wh = |w: &str| {
        let bare: String = w.chars().filter(|c| c.is_alphabetic()).collect::<String>().to_lowercase();
        WH_WORDS.contains(&bare.as_str())
    };
    let wh: Vec<usize> = (0..words.len()).filter(|&i| is_wh(words[i])).collect();
    let [i] = wh[..] else { return format!("{q} {answer}") };
    let next_is_do = words.get(i + 1).is_some_and(|w| DO_SUPPORT.contains(&w.to_lowercase().as_str()));
    let out: Vec<&str> = if next_is_do {
        words[..i].iter().chain(&words[i + 2..]).copied().chain([answer]).collect()
    } else {
        words[..i].iter().copied().chain([answer]).chain(words[i + 1..].iter().copied()).collect()
    };
    capitalise(&out.join(" "))
}

/// The entailment problem a multiple-choice item stands for.
pub fn mcqa_to_nli(item: &MCQAItem) -> NLIProblem {
    let answer = item.answer().map_or("", |c| c.text.as_str());
    NLIProblem {
        id: item.id.clone(),
        premise_text: item.context.clone(),
        hypothesis_text: hypothesis_from_question(&item.question, answer),
        explanation: item.explanation.clone(),
        source: ProblemSource::Mcqa,
        annotations: item.annotations.clone(),
    }
}

struct Record<'a> {
    line: usize,
    obj: &'a Map<String, Value>,
}

impl Record<'_> {
    fn bad(&self, field: &str) -> HarnessError {
        HarnessError::SchemaError { line: self.line, field: field.to_string() }
    }

    fn string(&self, field: &str) -> Result<String, HarnessError> {
        match self.obj.get(field) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
            _ => Err(self.bad(field)),
        }
    }

    fn opt_string(&self, field: &str) -> Result<Option<String>, HarnessError> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            _ => Err(self.bad(field)),
        }
    }

    fn facts(&self) -> Result<Vec<Fact>, HarnessError> {
        let Some(Value::Array(items)) = self.obj.get("explanation") else { return Err(self.bad("explanation")) };
        items
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::String(s) if !s.trim().is_empty() => Ok(Fact::new(&format!("f{}", i + 1), s)),
                _ => Err(self.bad(&format!("explanation[{i}]"))),
            })
            .collect()
    }

    fn annotations(&self) -> Result<BTreeMap<String, String>, HarnessError> {
        let mut out = BTreeMap::new();
        match self.obj.get("annotations") {
            None | Some(Value::Null) => {}
            Some(Value::Object(m)) => {
                for (k, v) in m {
                    let Value::String(s) = v else { return Err(self.bad(&format!("annotations.{k}"))) };
                    out.insert(k.clone(), s.clone());
                }
            }
            Some(_) => return Err(self.bad("annotations")),
        }
        if let Some(d) = self.opt_string("dataset")? {
            out.insert("dataset".into(), d);
        }
        Ok(out)
    }

    fn entailment(&self) -> Result<NLIProblem, HarnessError> {
        let source = match self.opt_string("source")?.as_deref() {
            None | Some("entailment") => ProblemSource::Entailment,
            Some("mcqa") => ProblemSource::Mcqa,
            Some(_) => return Err(self.bad("source")),
        };
        Ok(NLIProblem {
            id: self.string("id")?,
            premise_text: self.opt_string("premise")?,
            hypothesis_text: self.string("hypothesis")?,
            explanation: self.facts()?,
            source,
            annotations: self.annotations()?,
        })
    }

    fn mcqa(&self) -> Result<MCQAItem, HarnessError> {
        let id = self.string("id")?;
        let question = self.string("question")?;
        let Some(Value::Array(raw)) = self.obj.get("choices") else { return Err(self.bad("choices")) };
        let mut choices = Vec::with_capacity(raw.len());
        for (i, c) in raw.iter().enumerate() {
            let choice: Choice =
                serde_json::from_value(c.clone()).map_err(|_| self.bad(&format!("choices[{i}]")))?;
            choices.push(choice);
        }
        let answer_label = self.string("answer_label")?;
        if !choices.iter().any(|c| c.label == answer_label) {
            return Err(self.bad("answer_label"));
        }
        Ok(MCQAItem {
            id,
            question,
            choices,
            answer_label,
            context: self.opt_string("context")?,
            explanation: self.facts()?,
            annotations: self.annotations()?,
        })
    }
}

/// Problems from JSONL text, one record per non-blank line. `format`
/// `None` decides per record.
pub fn parse_problems(text: &str, format: Option<Format>) -> Result<Vec<NLIProblem>, HarnessError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(raw).map_err(|_| HarnessError::SchemaError { line, field: "<record>".into() })?;
        let Value::Object(obj) = &value else {
            return Err(HarnessError::SchemaError { line, field: "<record>".into() });
        };
        let rec = Record { line, obj };
        let problem = match format.unwrap_or_else(|| Format::detect(&value)) {
            Format::Entailment => rec.entailment()?,
            Format::Mcqa => mcqa_to_nli(&rec.mcqa()?),
        };
        if !seen.insert(problem.id.clone()) {
            return Err(HarnessError::DuplicateId { line, id: problem.id });
        }
        out.push(problem);
    }
    Ok(out)
}

pub fn load_problems(path: &Path, format: Option<Format>) -> Result<Vec<NLIProblem>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_problems(&text, format)
}

/// The canonical entailment record for `problem`.
pub fn problem_record(problem: &NLIProblem) -> Value {
    let mut v = json!({
        "id": problem.id,
        "hypothesis": problem.hypothesis_text,
        "explanation": problem.explanation.iter().map(|f| f.text.as_str()).collect::<Vec<_>>(),
    });
    if let Some(p) = &problem.premise_text {
        v["premise"] = json!(p);
    }
    if problem.source == ProblemSource::Mcqa {
        v["source"] = json!("mcqa");
    }
    if !problem.annotations.is_empty() {
        v["annotations"] = json!(problem.annotations);
    }
    v
}

/// JSONL text of `problems` in the entailment schema.
pub fn write_problems(problems: &[NLIProblem]) -> String {
    problems.iter().map(|p| problem_record(p).to_string() + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wh_substitution() {
        assert_eq!(hypothesis_from_question("What do predators hunt?", "prey"), "Predators hunt prey");
        assert_eq!(
            hypothesis_from_question("What is the closest star to Earth?", "the Sun"),
            "The Sun is the closest star to Earth"
        );
        assert_eq!(
            hypothesis_from_question("An animal that lives on land has?", "four limbs"),
            "An animal that lives on land has four limbs"
        );
        assert_eq!(hypothesis_from_question("Why and how?", "x"), "Why and how x");
    }

    #[test]
    fn entailment_records() {
        let text = r#"{"id": "a", "premise": "P.", "hypothesis": "H.", "explanation": ["x", "y"], "dataset": "e-SNLI"}

{"id": "b", "hypothesis": "H2.", "explanation": []}"#;
        let ps = parse_problems(text, None).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].explanation[1], Fact::new("f2", "y"));
        assert_eq!(ps[0].dataset(), Some("e-SNLI"));
        assert_eq!(ps[1].premise_text, None);
    }

    #[test]
    fn schema_and_duplicate_errors() {
        let e = parse_problems(r#"{"id": "a", "hypothesis": 3, "explanation": []}"#, None).unwrap_err();
        assert!(matches!(e, HarnessError::SchemaError { line: 1, ref field } if field == "hypothesis"));
        let e = parse_problems("not json", None).unwrap_err();
        assert!(matches!(e, HarnessError::SchemaError { line: 1, .. }));
        let text = "{\"id\":\"a\",\"hypothesis\":\"h\",\"explanation\":[]}\n{\"id\":\"a\",\"hypothesis\":\"h\",\"explanation\":[]}";
        assert!(matches!(parse_problems(text, None), Err(HarnessError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn mcqa_records() {
        let rec = r#"{"id": "q1", "question": "What do predators hunt?", "choices": [{"label": "A", "text": "plants"}, {"label": "B", "text": "prey"}], "answer_label": "B", "context": "Predators are animals.", "explanation": ["Predators eat prey."]}"#;
        let ps = parse_problems(rec, Some(Format::Mcqa)).unwrap();
        assert_eq!(ps[0].hypothesis_text, "Predators hunt prey");
        assert_eq!(ps[0].premise_text.as_deref(), Some("Predators are animals."));
        assert_eq!(ps[0].source, ProblemSource::Mcqa);
        let bad = rec.replace("\"answer_label\": \"B\"", "\"answer_label\": \"C\"");
        let e = parse_problems(&bad, None).unwrap_err();
        assert!(matches!(e, HarnessError::SchemaError { ref field, .. } if field == "answer_label"));
    }
}
