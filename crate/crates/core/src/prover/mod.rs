//! Checking theories: an Isabelle server client and a ground-enumeration
//! oracle behind one session interface, plus message classification and
//! mapping of errors back to proof steps.

mod classify;
mod ground;
pub mod isabelle;
mod sat;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::theory::{parse_theory, Span, TheoryDoc, TheoryLayout, ASSUMPTION};

pub use classify::{classify_error, ErrorClassifier, Region};
pub use ground::{entails, Domain, Entailment};
pub use isabelle::{IsabelleConfig, IsabelleSession};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(65);
pub const DEFAULT_DOMAIN_BOUND: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProverMessage {
    pub severity: Severity,
    pub text: String,
    pub span: Option<Span>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    TypeUnification,
    OtherSyntax,
    ProofFailure,
    Timeout,
    Unknown,
}

impl ErrorClass {
    /// The two classes the syntax loop repairs, plus unclassified errors
    /// that precede the proof.
    pub fn is_syntax(self) -> bool {
        matches!(self, ErrorClass::TypeUnification | ErrorClass::OtherSyntax)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Valid,
    Failed,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstError {
    pub message: ProverMessage,
    pub class: ErrorClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub status: CheckStatus,
    pub messages: Vec<ProverMessage>,
    /// Wall-clock seconds.
    pub elapsed: f64,
    pub first_error: Option<FirstError>,
}

impl CheckReport {
    /// Derives status and first error from the message list.
    pub fn from_messages(
        messages: Vec<ProverMessage>,
        elapsed: Duration,
        timed_out: bool,
        classifier: &ErrorClassifier,
        layout: Option<&TheoryLayout>,
    ) -> CheckReport {
        let first = first_error(&messages).cloned();
        let status = if timed_out {
            CheckStatus::Timeout
        } else if first.is_some() {
            CheckStatus::Failed
        } else {
            CheckStatus::Valid
        };
        let first_error = first.map(|m| {
            let class = if timed_out && m.span.is_none() { ErrorClass::Timeout } else { classifier.classify(&m, layout) };
            FirstError { message: m, class }
        });
        CheckReport { status, messages, elapsed: elapsed.as_secs_f64(), first_error }
    }

    /// Report for a check that never reached the prover.
    pub fn synthetic_failure(text: &str) -> CheckReport {
        let msg = ProverMessage { severity: Severity::Error, text: text.to_string(), span: None };
        CheckReport {
            status: CheckStatus::Failed,
            first_error: Some(FirstError { message: msg.clone(), class: ErrorClass::Unknown }),
            messages: vec![msg],
            elapsed: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.status == CheckStatus::Valid
    }

    pub fn errors(&self) -> impl Iterator<Item = &ProverMessage> {
        self.messages.iter().filter(|m| m.severity == Severity::Error)
    }
}

/// Error with the smallest span start; unspanned errors come after all
/// spanned ones, in list order.
pub fn first_error(messages: &[ProverMessage]) -> Option<&ProverMessage> {
    messages
        .iter()
        .enumerate()
        .filter(|(_, m)| m.severity == Severity::Error)
        .min_by_key(|(i, m)| (m.span.map_or(usize::MAX, |s| s.start), *i))
        .map(|(_, m)| m)
}

#[derive(Debug, Error)]
pub enum ProverError {
    #[error("cannot connect to prover at {addr}: {reason}")]
    ConnectFailed { addr: String, reason: String },
    #[error("prover rejected the password")]
    AuthFailed,
    #[error("session build failed: {0}")]
    SessionBuildFailed(String),
    #[error("prover session is no longer alive: {0}")]
    SessionDead(String),
    #[error("prover failed to load the theory: {0}")]
    TheoryLoadFailed(String),
    #[error("prover protocol error: {0}")]
    Protocol(String),
    #[error("prover configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProverBackend {
    IsabelleServer(IsabelleConfig),
    GroundOracle { domain_bound: usize },
}

impl Default for ProverBackend {
    fn default() -> Self {
        ProverBackend::GroundOracle { domain_bound: DEFAULT_DOMAIN_BOUND }
    }
}

enum Inner {
    Oracle { domain_bound: usize },
    Isabelle(IsabelleSession),
}

/// A started prover session, owned by one worker at a time.
pub struct SessionHandle {
    inner: Inner,
    classifier: ErrorClassifier,
}

pub fn start_session(backend: &ProverBackend) -> Result<SessionHandle, ProverError> {
    start_session_with(backend, ErrorClassifier::default())
}

pub fn start_session_with(backend: &ProverBackend, classifier: ErrorClassifier) -> Result<SessionHandle, ProverError> {
    let inner = match backend {
        ProverBackend::GroundOracle { domain_bound } => {
            if *domain_bound == 0 {
                return Err(ProverError::Config("domain bound must be positive".into()));
            }
            Inner::Oracle { domain_bound: *domain_bound }
        }
        ProverBackend::IsabelleServer(cfg) => Inner::Isabelle(IsabelleSession::start(cfg)?),
    };
    Ok(SessionHandle { inner, classifier })
}

impl SessionHandle {
    pub fn session_id(&self) -> Option<&str> {
        match &self.inner {
            Inner::Oracle { .. } => None,
            Inner::Isabelle(s) => Some(s.session_id()),
        }
    }

    pub fn check_theory(&mut self, doc: &TheoryDoc, timeout: Duration) -> Result<CheckReport, ProverError> {
        self.check_text(&doc.name, &doc.render(), timeout)
    }

    /// Checks raw theory text, e.g. a version edited by the syntax stage.
    pub fn check_text(&mut self, name: &str, text: &str, timeout: Duration) -> Result<CheckReport, ProverError> {
        let started = Instant::now();
        match &mut self.inner {
            Inner::Oracle { domain_bound } => {
                let out = ground::check_text(text, *domain_bound, timeout);
                let layout = out.parsed.as_ref().map(|p| &p.layout);
                Ok(CheckReport::from_messages(out.messages, started.elapsed(), out.timed_out, &self.classifier, layout))
            }
            Inner::Isabelle(session) => {
                let (messages, timed_out) = session.use_theory(name, text, timeout)?;
                let layout = parse_theory(text).ok().map(|p| p.layout);
                Ok(CheckReport::from_messages(messages, started.elapsed(), timed_out, &self.classifier, layout.as_ref()))
            }
        }
    }

    pub fn shutdown(self) -> Result<(), ProverError> {
        match self.inner {
            Inner::Oracle { .. } => Ok(()),
            Inner::Isabelle(session) => session.stop(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LocateError {
    #[error("error span at line {0} lies outside every region of the theory")]
    SpanUnmapped(usize),
}

/// The failed proof step and the axioms it cites, for the report's first
/// error. `None` when the error precedes the proof or has no span.
pub fn locate_failed_step(
    report: &CheckReport,
    doc: &TheoryDoc,
) -> Result<Option<(usize, Vec<String>)>, LocateError> {
    let Some(first) = &report.first_error else { return Ok(None) };
    let Some(span) = first.message.span else { return Ok(None) };
    let text = doc.render();
    let Ok(parsed) = parse_theory(&text) else { return Ok(None) };
    locate_in_layout(span, &parsed.layout, doc)
}

pub(crate) fn locate_in_layout(
    span: Span,
    layout: &TheoryLayout,
    doc: &TheoryDoc,
) -> Result<Option<(usize, Vec<String>)>, LocateError> {
    if span.line == 0 || span.line > layout.last_line {
        return Err(LocateError::SpanUnmapped(span.line));
    }
    if layout.proof_line.is_none_or(|p| span.line < p) {
        return Ok(None);
    }
    let Some(idx) = layout.step_at_line(span.line) else {
        if layout.in_proof(span.line) {
            return Ok(None);
        }
        return Err(LocateError::SpanUnmapped(span.line));
    };
    let Some(step) = doc.proof.get(idx) else { return Err(LocateError::SpanUnmapped(span.line)) };
    let b = step.facts_used.iter().filter(|f| f.as_str() != ASSUMPTION).cloned().collect();
    Ok(Some((idx, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn msg(start: Option<usize>, line: usize) -> ProverMessage {
        ProverMessage {
            severity: Severity::Error,
            text: "Failed to finish proof".into(),
            span: start.map(|s| Span { line, start: s, end: s + 1 }),
        }
    }

    #[test]
    fn first_error_is_smallest_span_start() {
        let ms = vec![msg(Some(90), 9), msg(None, 0), msg(Some(40), 4)];
        assert_eq!(first_error(&ms).unwrap().span.unwrap().start, 40);
        let unspanned = vec![msg(None, 0), msg(None, 0)];
        assert!(std::ptr::eq(first_error(&unspanned).unwrap(), &unspanned[0]));
    }

    #[test]
    fn status_valid_iff_no_errors() {
        let c = ErrorClassifier::default();
        let warn = ProverMessage { severity: Severity::Warning, text: "w".into(), span: None };
        let r = CheckReport::from_messages(vec![warn], Duration::ZERO, false, &c, None);
        assert!(r.is_valid() && r.first_error.is_none());
        let r = CheckReport::from_messages(vec![msg(None, 0)], Duration::ZERO, false, &c, None);
        assert_eq!(r.status, CheckStatus::Failed);
    }

    #[test]
    fn oracle_accepts_violin_theory() {
        let mut h = start_session(&ProverBackend::GroundOracle { domain_bound: 4 }).unwrap();
        let r = h.check_theory(&fixtures::violin_theory(), DEFAULT_TIMEOUT).unwrap();
        assert!(r.is_valid(), "{:?}", r.messages);
        assert!(h.session_id().is_none());
        h.shutdown().unwrap();
    }

    #[test]
    fn locate_second_step_of_violin_proof() {
        let doc = fixtures::violin_theory();
        let parsed = parse_theory(&doc.render()).unwrap();
        let span = parsed.layout.steps[1];
        let report = CheckReport::from_messages(
            vec![msg(Some(span.start), span.line)],
            Duration::ZERO,
            false,
            &ErrorClassifier::default(),
            Some(&parsed.layout),
        );
        assert_eq!(locate_failed_step(&report, &doc).unwrap(), Some((1, vec!["explanation_1".to_string()])));
    }

    #[test]
    fn locate_axiom_error_is_absent_and_stray_line_unmapped() {
        let doc = fixtures::violin_theory();
        let parsed = parse_theory(&doc.render()).unwrap();
        let ax = parsed.layout.axioms[0];
        assert_eq!(locate_in_layout(ax, &parsed.layout, &doc), Ok(None));
        let stray = Span { line: parsed.layout.last_line + 3, start: 0, end: 0 };
        assert_eq!(locate_in_layout(stray, &parsed.layout, &doc), Err(LocateError::SpanUnmapped(stray.line)));
    }

    #[test]
    fn zero_domain_bound_is_rejected() {
        assert!(start_session(&ProverBackend::GroundOracle { domain_bound: 0 }).is_err());
    }
}
