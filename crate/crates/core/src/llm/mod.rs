//! Prompt stages over a chat-completion endpoint, with per-stage model
//! routing and a record/replay transcript cache.

mod cache;
mod extract;
mod http;
mod templates;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, Transcript, TranscriptCache};
pub use extract::{
    extract_events, extract_facts, extract_kept, extract_logic, extract_proof, extract_stage_output,
    extract_strategy, extract_theory_text, last_fenced_block, RawStrategy, StageOutput,
};
pub use http::{HttpChat, RetryPolicy, API_KEY_ENV};
pub use templates::{placeholders, render_template, template};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageKind {
    DetectEvents,
    SentenceToLogic,
    LogicToAxioms,
    BuildTheoremCode,
    RefineSyntax,
    RoughInference,
    ConstructProof,
    FilterFacts,
    RefineExplanation,
}

impl StageKind {
    pub const ALL: [StageKind; 9] = [
        StageKind::DetectEvents,
        StageKind::SentenceToLogic,
        StageKind::LogicToAxioms,
        StageKind::BuildTheoremCode,
        StageKind::RefineSyntax,
        StageKind::RoughInference,
        StageKind::ConstructProof,
        StageKind::FilterFacts,
        StageKind::RefineExplanation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageKind::DetectEvents => "DetectEvents",
            StageKind::SentenceToLogic => "SentenceToLogic",
            StageKind::LogicToAxioms => "LogicToAxioms",
            StageKind::BuildTheoremCode => "BuildTheoremCode",
            StageKind::RefineSyntax => "RefineSyntax",
            StageKind::RoughInference => "RoughInference",
            StageKind::ConstructProof => "ConstructProof",
            StageKind::FilterFacts => "FilterFacts",
            StageKind::RefineExplanation => "RefineExplanation",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StageKind {
    type Err = LlmError;

    /// Accepts `ConstructProof`, `construct_proof` or `construct-proof`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
        StageKind::ALL
            .into_iter()
            .find(|k| k.name().to_lowercase() == norm)
            .ok_or_else(|| LlmError::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl FromStr for Mode {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(LlmError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LLMConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub per_stage_overrides: BTreeMap<StageKind, String>,
}

impl Default for LLMConfig {
    fn default() -> Self {
        LLMConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4".into(),
            temperature: 0.0,
            max_tokens: 2048,
            per_stage_overrides: BTreeMap::new(),
        }
    }
}

impl LLMConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.model_name.is_empty() {
            return Err(LlmError::Config("empty model name".into()));
        }
        Ok(())
    }

    pub fn model_for(&self, stage: StageKind) -> &str {
        self.per_stage_overrides.get(&stage).map_or(&self.model_name, String::as_str)
    }
}

/// One chat request as sent to a backend.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChatRequest {
    pub stage: StageKind,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub prompt: String,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError>;
}

/// Backend from a closure, for scripted runs.
pub struct FnChat<F>(pub F);

impl<F> ChatBackend for FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        (self.0)(req)
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("HTTP error after {attempts} attempt(s): {message}")]
    Http { attempts: u32, status: Option<u16>, message: String },
    #[error("no cached transcript for {stage} (key {key})")]
    CacheMiss { stage: StageKind, key: String },
    #[error("template placeholder {{{0}}} is not bound")]
    TemplateUnbound(String),
    #[error("malformed {stage} output: {reason}")]
    MalformedStageOutput { stage: StageKind, reason: String },
    #[error("transcript cache: {0}")]
    Cache(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl LlmError {
    pub(crate) fn malformed(stage: StageKind, reason: impl Into<String>) -> Self {
        LlmError::MalformedStageOutput { stage, reason: reason.into() }
    }
}

/// Entry point for all stages: renders prompts, routes models, and applies
/// the live/record/replay policy.
#[derive(Clone)]
pub struct Gateway {
    cfg: LLMConfig,
    mode: Mode,
    backend: Option<Arc<dyn ChatBackend>>,
    cache: Option<Arc<TranscriptCache>>,
}

impl Gateway {
    /// `backend` may be absent only in replay mode; `cache` is required for
    /// record and replay.
    pub fn new(
        cfg: LLMConfig,
        mode: Mode,
        backend: Option<Arc<dyn ChatBackend>>,
        cache: Option<Arc<TranscriptCache>>,
    ) -> Result<Gateway, LlmError> {
        cfg.validate()?;
        if mode != Mode::Replay && backend.is_none() {
            return Err(LlmError::Config(format!("{mode:?} mode needs a chat backend")));
        }
        if mode != Mode::Live && cache.is_none() {
            return Err(LlmError::Config(format!("{mode:?} mode needs a transcript cache")));
        }
        Ok(Gateway { cfg, mode, backend, cache })
    }

    pub fn config(&self) -> &LLMConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Raw response text for `stage` with `bindings` substituted into its
    /// template.
    pub fn complete(&self, stage: StageKind, bindings: &[(&str, &str)]) -> Result<String, LlmError> {
        let prompt = render_template(template(stage), bindings)?;
        let model = self.cfg.model_for(stage).to_string();
        let key = cache_key(stage, &prompt, &model, self.cfg.temperature);
        match self.mode {
            Mode::Replay => {
                let cache = self.cache.as_ref().expect("checked in new");
                cache.get(&key).ok_or(LlmError::CacheMiss { stage, key })
            }
            Mode::Live | Mode::Record => {
                let req = ChatRequest {
                    stage,
                    model,
                    temperature: self.cfg.temperature,
                    max_tokens: self.cfg.max_tokens,
                    prompt,
                };
                let response = self.backend.as_ref().expect("checked in new").chat(&req)?;
                if self.mode == Mode::Record {
                    let cache = self.cache.as_ref().expect("checked in new");
                    cache.append(Transcript::new(key, req.prompt, response.clone()))?;
                }
                Ok(response)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn stage_names_parse_in_several_spellings() {
        for k in StageKind::ALL {
            assert_eq!(k.name().parse::<StageKind>().unwrap(), k);
        }
        assert_eq!("logic_to_axioms".parse::<StageKind>().unwrap(), StageKind::LogicToAxioms);
        assert_eq!("refine-syntax".parse::<StageKind>().unwrap(), StageKind::RefineSyntax);
        assert!("nope".parse::<StageKind>().is_err());
    }

    #[test]
    fn temperature_range_is_enforced() {
        let mut cfg = LLMConfig { temperature: 2.5, ..LLMConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.temperature = 0.01;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn overrides_route_models() {
        let mut cfg = LLMConfig::default();
        cfg.per_stage_overrides.insert(StageKind::LogicToAxioms, "m2".into());
        assert_eq!(cfg.model_for(StageKind::LogicToAxioms), "m2");
        assert_eq!(cfg.model_for(StageKind::DetectEvents), "gpt-4");
    }

    #[test]
    fn record_then_replay_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let calls = Arc::new(AtomicUsize::new(0));
        let counter = calls.clone();
        let backend: Arc<dyn ChatBackend> = Arc::new(FnChat(move |req: &ChatRequest| {
            counter.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo {}", req.model))
        }));
        let cache = Arc::new(TranscriptCache::open(&path).unwrap());
        let rec = Gateway::new(LLMConfig::default(), Mode::Record, Some(backend), Some(cache)).unwrap();
        let bindings = [("sentences", "p: A cat sleeps.")];
        let first = rec.complete(StageKind::DetectEvents, &bindings).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);

        let cache = Arc::new(TranscriptCache::open(&path).unwrap());
        let replay = Gateway::new(LLMConfig::default(), Mode::Replay, None, Some(cache)).unwrap();
        assert_eq!(replay.complete(StageKind::DetectEvents, &bindings).unwrap(), first);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert!(matches!(
            replay.complete(StageKind::DetectEvents, &[("sentences", "other")]),
            Err(LlmError::CacheMiss { .. })
        ));
    }

    #[test]
    fn missing_binding_is_reported() {
        let backend: Arc<dyn ChatBackend> = Arc::new(FnChat(|_: &ChatRequest| Ok(String::new())));
        let g = Gateway::new(LLMConfig::default(), Mode::Live, Some(backend), None).unwrap();
        match g.complete(StageKind::SentenceToLogic, &[("events", "")]) {
            Err(LlmError::TemplateUnbound(name)) => assert_eq!(name, "sentences"),
            other => panic!("{other:?}"),
        }
    }
}
