//! Parsing of raw stage responses. Every function here is total: it returns
//! a payload or `MalformedStageOutput`, whatever the input.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{LlmError, StageKind};
use crate::theory::{ProofStep, StepKind, ASSUMPTION};

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[^\n`]*\n(.*?)```").unwrap());

/// Body of the last complete fenced block.
pub fn last_fenced_block(raw: &str) -> Option<&str> {
    FENCE.captures_iter(raw).last().and_then(|c| c.get(1)).map(|m| m.as_str())
}

fn block(stage: StageKind, raw: &str) -> Result<&str, LlmError> {
    last_fenced_block(raw).ok_or_else(|| LlmError::malformed(stage, "no fenced block"))
}

fn content_lines(body: &str) -> impl Iterator<Item = &str> {
    body.lines().map(str::trim).filter(|l| !l.is_empty())
}

fn split_list(s: &str) -> Vec<String> {
    s.split([',', ' ', ';'])
        .map(|t| t.trim_matches(|c: char| c == '`' || c == '"' || c == '.' || c == '[' || c == ']'))
        .filter(|t| !t.is_empty() && !t.eq_ignore_ascii_case("none"))
        .map(str::to_string)
        .collect()
}

/// Strips bullet and numbering prefixes such as `- `, `* `, `3. `, `2) `.
fn strip_bullet(line: &str) -> &str {
    let l = line.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = l.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &l[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', ':']) {
            return r.trim_start();
        }
    }
    l
}

/// `id: rest` lines of the last block.
fn keyed_lines(stage: StageKind, raw: &str) -> Result<Vec<(String, String)>, LlmError> {
    let body = block(stage, raw)?;
    let mut out = Vec::new();
    for line in content_lines(body) {
        let line = strip_bullet(line);
        let Some((id, rest)) = line.split_once(':') else {
            return Err(LlmError::malformed(stage, format!("line without `id:` prefix: {line:?}")));
        };
        let id = id.trim().trim_matches('`');
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(LlmError::malformed(stage, format!("bad sentence id {id:?}")));
        }
        out.push((id.to_string(), rest.trim().to_string()));
    }
    if out.is_empty() {
        return Err(LlmError::malformed(stage, "empty block"));
    }
    Ok(out)
}

/// DetectEvents: sentence id with its event words.
pub fn extract_events(raw: &str) -> Result<Vec<(String, Vec<String>)>, LlmError> {
    Ok(keyed_lines(StageKind::DetectEvents, raw)?
        .into_iter()
        .map(|(id, rest)| {
            let words = rest
                .split(',')
                .map(|w| w.trim().trim_matches('`').to_string())
                .filter(|w| !w.is_empty() && !w.eq_ignore_ascii_case("none"))
                .collect();
            (id, words)
        })
        .collect())
}

/// SentenceToLogic: sentence id with canonical formula text.
pub fn extract_logic(raw: &str) -> Result<Vec<(String, String)>, LlmError> {
    let lines = keyed_lines(StageKind::SentenceToLogic, raw)?;
    if let Some((id, _)) = lines.iter().find(|(_, f)| f.is_empty()) {
        return Err(LlmError::malformed(StageKind::SentenceToLogic, format!("no formula for {id}")));
    }
    Ok(lines.into_iter().map(|(id, f)| (id, f.trim_matches('`').to_string())).collect())
}

/// LogicToAxioms, BuildTheoremCode, RefineSyntax: the block text.
pub fn extract_theory_text(stage: StageKind, raw: &str) -> Result<String, LlmError> {
    let body = block(stage, raw)?.trim();
    if body.is_empty() {
        return Err(LlmError::malformed(stage, "empty block"));
    }
    Ok(format!("{body}\n"))
}

/// RoughInference before ids are resolved against the explanation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawStrategy {
    pub narrative: String,
    pub relevant: Vec<String>,
    pub redundant: Vec<String>,
}

/// RoughInference: narrative text plus `relevant:` / `redundant:` lines,
/// found anywhere in the response.
pub fn extract_strategy(raw: &str) -> Result<RawStrategy, LlmError> {
    let mut out = RawStrategy::default();
    let mut found = false;
    let mut narrative = Vec::new();
    for line in raw.lines() {
        let t = strip_bullet(line.trim()).trim_matches('*');
        let lower = t.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("relevant:") {
            out.relevant.extend(split_list(&t[t.len() - rest.len()..]));
            found = true;
        } else if let Some(rest) = lower.strip_prefix("redundant:") {
            out.redundant.extend(split_list(&t[t.len() - rest.len()..]));
            found = true;
        } else if !line.trim_start().starts_with("```") {
            narrative.push(line);
        }
    }
    if !found {
        return Err(LlmError::malformed(StageKind::RoughInference, "no relevant/redundant lines"));
    }
    out.narrative = narrative.join("\n").trim().to_string();
    Ok(out)
}

static STEP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"^(?:(?P<lead>then|hence|thus|from\s+[\w\s]+?)\s+)?(?P<verb>have|show|hence|thus)?\s*(?:"(?P<goal>[^"]*)"|(?P<thesis>\?thesis))(?:\s+using\s+(?P<using>[\w\s]+?))?\s+by\s+\(?(?P<method>[\w\s]+?)\)?\s*$"#,
    )
    .unwrap()
});

/// ConstructProof: step records from the block, ignoring `proof -`/`qed`.
pub fn extract_proof(raw: &str) -> Result<Vec<ProofStep>, LlmError> {
    let stage = StageKind::ConstructProof;
    let body = block(stage, raw)?;
    let mut steps = Vec::new();
    for line in content_lines(body) {
        if matches!(line, "proof" | "proof -" | "qed" | "proof-") || line.starts_with("(*") {
            continue;
        }
        let caps = STEP.captures(line).ok_or_else(|| LlmError::malformed(stage, format!("unrecognised step {line:?}")))?;
        let lead = caps.name("lead").map_or("", |m| m.as_str());
        let verb = caps.name("verb").map(|m| m.as_str());
        let (chained, verb) = match (lead, verb) {
            ("hence", None) => (true, "have"),
            ("thus", None) => (true, "show"),
            ("then", Some(v)) => (true, v),
            (_, Some("hence")) => (true, "have"),
            (_, Some("thus")) => (true, "show"),
            (_, Some(v)) => (false, v),
            (_, None) => return Err(LlmError::malformed(stage, format!("step without have/show: {line:?}"))),
        };
        let mut facts: Vec<String> = Vec::new();
        let mut from_asm = false;
        if let Some(list) = lead.strip_prefix("from") {
            for f in list.split_whitespace() {
                if f == ASSUMPTION {
                    from_asm = true;
                }
                facts.push(f.to_string());
            }
        }
        if let Some(u) = caps.name("using") {
            facts.extend(u.as_str().split_whitespace().map(str::to_string));
        }
        let mut dedup: Vec<String> = Vec::new();
        for f in facts {
            if !dedup.contains(&f) {
                dedup.push(f);
            }
        }
        let kind = if verb == "show" {
            StepKind::ThenShowThesis
        } else if from_asm && !chained {
            StepKind::FromAsmHave
        } else {
            StepKind::ThenHave
        };
        let goal_text = match kind {
            StepKind::ThenShowThesis => "?thesis".to_string(),
            _ => match caps.name("goal") {
                Some(g) => g.as_str().to_string(),
                None => return Err(LlmError::malformed(stage, "`have ?thesis` is not a claim")),
            },
        };
        let method = caps.name("method").map_or("blast", |m| m.as_str().trim());
        steps.push(ProofStep { kind, goal_text, facts_used: dedup, tactic: method.to_string() });
    }
    if steps.is_empty() {
        return Err(LlmError::malformed(stage, "no proof steps"));
    }
    Ok(steps)
}

/// FilterFacts: ids from `keep:` lines.
pub fn extract_kept(raw: &str) -> Result<Vec<String>, LlmError> {
    let body = block(StageKind::FilterFacts, raw)?;
    let mut kept = Vec::new();
    let mut found = false;
    for line in content_lines(body) {
        let lower = line.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("keep:") {
            found = true;
            kept.extend(split_list(&line[line.len() - rest.len()..]));
        }
    }
    if !found {
        return Err(LlmError::malformed(StageKind::FilterFacts, "no `keep:` line"));
    }
    Ok(kept)
}

/// RefineExplanation: one fact per block line.
pub fn extract_facts(raw: &str) -> Result<Vec<String>, LlmError> {
    let body = block(StageKind::RefineExplanation, raw)?;
    let facts: Vec<String> = content_lines(body).map(|l| strip_bullet(l).trim().to_string()).filter(|l| !l.is_empty()).collect();
    if facts.is_empty() {
        return Err(LlmError::malformed(StageKind::RefineExplanation, "empty explanation"));
    }
    Ok(facts)
}

#[derive(Clone, Debug, PartialEq)]
pub enum StageOutput {
    Events(Vec<(String, Vec<String>)>),
    Logic(Vec<(String, String)>),
    TheoryText(String),
    Strategy(RawStrategy),
    Proof(Vec<ProofStep>),
    Kept(Vec<String>),
    Facts(Vec<String>),
}

pub fn extract_stage_output(stage: StageKind, raw: &str) -> Result<StageOutput, LlmError> {
    Ok(match stage {
        StageKind::DetectEvents => StageOutput::Events(extract_events(raw)?),
        StageKind::SentenceToLogic => StageOutput::Logic(extract_logic(raw)?),
        StageKind::LogicToAxioms | StageKind::BuildTheoremCode | StageKind::RefineSyntax => {
            StageOutput::TheoryText(extract_theory_text(stage, raw)?)
        }
        StageKind::RoughInference => StageOutput::Strategy(extract_strategy(raw)?),
        StageKind::ConstructProof => StageOutput::Proof(extract_proof(raw)?),
        StageKind::FilterFacts => StageOutput::Kept(extract_kept(raw)?),
        StageKind::RefineExplanation => StageOutput::Facts(extract_facts(raw)?),
    })
}
