//! Reader for the theory dialect the renderer emits, tolerant of the small
//! variations a language model introduces when it edits a theory (plain
//! `have`, `from asm show`, parenthesised methods, Unicode symbols).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Axiom, ProofStep, StepKind, TheoremBlock, TheoryDoc, ASSUMPTION};
use crate::logic::{parse_formula_unchecked, Formula, Signature, Syntax};

/// A byte range of the theory text; `line` is the 1-based line of `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub start: usize,
    pub end: usize,
}

/// Where the parts of a theory sit in its text.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TheoryLayout {
    pub consts: Vec<Span>,
    pub axioms: Vec<Span>,
    pub theorem_line: usize,
    pub premise: Option<Span>,
    pub goal: Option<Span>,
    /// Line of `proof`, `by` or `sorry` closing the theorem statement.
    pub proof_line: Option<usize>,
    pub steps: Vec<Span>,
    pub qed_line: Option<usize>,
    pub last_line: usize,
}

impl TheoryLayout {
    /// Index of the proof step whose text covers `line`.
    pub fn step_at_line(&self, line: usize) -> Option<usize> {
        self.steps.iter().position(|s| s.line == line)
    }

    pub fn in_proof(&self, line: usize) -> bool {
        match (self.proof_line, self.qed_line) {
            (Some(start), Some(end)) => line >= start && line <= end,
            (Some(start), None) => line == start,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{} syntax error at line {line}: {message}", if *.inner { "inner" } else { "outer" })]
pub struct TheoryParseError {
    pub offset: usize,
    pub end: usize,
    pub line: usize,
    pub message: String,
    /// True when the error lies inside a quoted formula.
    pub inner: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedTheory {
    pub doc: TheoryDoc,
    pub layout: TheoryLayout,
    /// Predicates declared in `consts`, with the span of each declaration.
    pub declared: Signature,
}

pub fn parse_theory(text: &str) -> Result<ParsedTheory, TheoryParseError> {
    let toks = lex(text)?;
    Reader { text, toks, pos: 0, comment: None }.theory()
}

pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

#[derive(Clone, Debug, PartialEq)]
enum T {
    Word(String),
    Str(String),
    Comment(String),
    Colon,
    DoubleColon,
    Dash,
    LParen,
    RParen,
    Eof,
}

struct Tok {
    t: T,
    start: usize,
    end: usize,
}

fn lex(text: &str) -> Result<Vec<Tok>, TheoryParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |at: usize, msg: &str| TheoryParseError {
        offset: at,
        end: (at + 1).min(text.len()),
        line: line_of(text, at),
        message: msg.to_string(),
        inner: false,
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if bytes[i..].starts_with("(*".as_bytes()) {
            let mut depth = 0;
            while i < bytes.len() {
                if bytes[i..].starts_with("(*".as_bytes()) {
                    depth += 1;
                    i += 2;
                } else if bytes[i..].starts_with("*)".as_bytes()) {
                    depth -= 1;
                    i += 2;
                    if depth == 0 {
                        break;
                    }
                } else {
                    i += 1;
                }
            }
            if depth != 0 {
                return Err(err(start, "unterminated comment"));
            }
            let body = text[start + 2..i - 2].trim().to_string();
            out.push(Tok { t: T::Comment(body), start, end: i });
            continue;
        }
        match c {
            b'"' => {
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'"') {
                        i += 1;
                    }
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(err(start, "unterminated string"));
                }
                i += 1;
                out.push(Tok { t: T::Str(text[start + 1..i - 1].to_string()), start, end: i });
            }
            b':' if bytes.get(i + 1) == Some(&b':') => {
                i += 2;
                out.push(Tok { t: T::DoubleColon, start, end: i });
            }
            b':' => {
                i += 1;
                out.push(Tok { t: T::Colon, start, end: i });
            }
            b'-' => {
                i += 1;
                out.push(Tok { t: T::Dash, start, end: i });
            }
            b'(' => {
                i += 1;
                out.push(Tok { t: T::LParen, start, end: i });
            }
            b')' => {
                i += 1;
                out.push(Tok { t: T::RParen, start, end: i });
            }
            c if c.is_ascii_alphanumeric() || c == b'?' || c == b'_' => {
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'.' | b'\''))
                {
                    i += 1;
                }
                out.push(Tok { t: T::Word(text[start..i].to_string()), start, end: i });
            }
            _ => {
                let ch = text[i..].chars().next().unwrap();
                return Err(err(start, &format!("unexpected character {ch:?}")));
            }
        }
    }
    out.push(Tok { t: T::Eof, start: text.len(), end: text.len() });
    Ok(out)
}

struct Reader<'a> {
    text: &'a str,
    toks: Vec<Tok>,
    pos: usize,
    /// Most recent comment, consumed by the item that follows it.
    comment: Option<String>,
}

impl<'a> Reader<'a> {
    fn skip_comments(&mut self) {
        while let T::Comment(c) = &self.toks[self.pos].t {
            self.comment = Some(c.clone());
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> &T {
        self.skip_comments();
        &self.toks[self.pos].t
    }

    fn tok(&mut self) -> &Tok {
        self.skip_comments();
        &self.toks[self.pos]
    }

    fn next(&mut self) -> (T, usize, usize) {
        self.skip_comments();
        let t = &self.toks[self.pos];
        let out = (t.t.clone(), t.start, t.end);
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        out
    }

    fn fail(&mut self, msg: &str) -> TheoryParseError {
        let (start, end) = {
            let t = self.tok();
            (t.start, t.end)
        };
        TheoryParseError {
            offset: start,
            end: end.max(start),
            line: line_of(self.text, start),
            message: msg.to_string(),
            inner: false,
        }
    }

    fn is_word(&mut self, w: &str) -> bool {
        matches!(self.peek(), T::Word(x) if x == w)
    }

    fn keyword(&mut self, w: &str) -> Result<(), TheoryParseError> {
        if self.is_word(w) {
            self.next();
            Ok(())
        } else {
            Err(self.fail(&format!("expected `{w}`")))
        }
    }

    fn name(&mut self) -> Result<String, TheoryParseError> {
        match self.peek().clone() {
            T::Word(w) => {
                self.next();
                Ok(w)
            }
            _ => Err(self.fail("expected a name")),
        }
    }

    fn string(&mut self) -> Result<(String, Span), TheoryParseError> {
        if !matches!(self.peek(), T::Str(_)) {
            return Err(self.fail("expected a quoted string"));
        }
        match self.next() {
            (T::Str(s), start, end) => Ok((s, Span { line: line_of(self.text, start), start, end })),
            _ => unreachable!(),
        }
    }

    fn punct(&mut self, p: T, what: &str) -> Result<(), TheoryParseError> {
        if *self.peek() == p {
            self.next();
            Ok(())
        } else {
            Err(self.fail(&format!("expected `{what}`")))
        }
    }

    fn formula(&self, body: &str, span: Span) -> Result<Formula, TheoryParseError> {
        parse_formula_unchecked(body, Syntax::Prover).map_err(|e| {
            let at = span.start + 1 + e.offset;
            TheoryParseError {
                offset: at,
                end: span.end,
                line: line_of(self.text, at),
                message: format!("failed to parse prop: {e}"),
                inner: true,
            }
        })
    }

    fn take_comment(&mut self, prefix: &str) -> Option<String> {
        let c = self.comment.take()?;
        let rest = c.strip_prefix(prefix)?;
        // "Explanation 3: text" / "Premise: text"
        let rest = rest.trim_start_matches(|ch: char| ch.is_ascii_digit() || ch == ' ');
        Some(rest.strip_prefix(':').unwrap_or(rest).trim().to_string())
    }

    fn theory(mut self) -> Result<ParsedTheory, TheoryParseError> {
        self.keyword("theory")?;
        let name = self.name()?;
        self.keyword("imports")?;
        while !self.is_word("begin") {
            if matches!(self.peek(), T::Eof) {
                return Err(self.fail("expected `begin`"));
            }
            self.name()?;
        }
        self.keyword("begin")?;

        let mut layout = TheoryLayout::default();
        let mut declared = Signature::new();
        let mut types: Vec<String> = Vec::new();
        let mut axioms = Vec::new();
        let mut theorem: Option<TheoremBlock> = None;
        let mut proof = Vec::new();

        loop {
            match self.peek().clone() {
                T::Word(w) if w == "end" => {
                    self.next();
                    break;
                }
                T::Word(w) if w == "typedecl" => {
                    self.next();
                    types.push(self.name()?);
                }
                T::Word(w) if w == "consts" => {
                    self.next();
                    while let T::Word(_) = self.peek() {
                        if self.is_keyword_start() {
                            break;
                        }
                        let start = self.tok().start;
                        let cname = self.name()?;
                        self.punct(T::DoubleColon, "::")?;
                        let (ty, span) = self.string()?;
                        let arity = self.arity_of(&ty, &types, span)?;
                        if declared.declare(&cname, arity).is_err() {
                            return Err(TheoryParseError {
                                offset: start,
                                end: span.end,
                                line: line_of(self.text, start),
                                message: format!("duplicate declaration of constant {cname}"),
                                inner: false,
                            });
                        }
                        layout.consts.push(Span { line: line_of(self.text, start), start, end: span.end });
                    }
                }
                T::Word(w) if w == "axiomatization" => {
                    self.next();
                    self.keyword("where")?;
                    loop {
                        self.skip_comments();
                        let source = self.take_comment("Explanation").unwrap_or_default();
                        let aname = self.name()?;
                        self.punct(T::Colon, ":")?;
                        let (body, span) = self.string()?;
                        let formula = self.formula(&body, span)?;
                        layout.axioms.push(span);
                        axioms.push(Axiom { name: aname, formula, source_text: source });
                        if self.is_word("and") {
                            self.next();
                        } else {
                            break;
                        }
                    }
                }
                T::Word(w) if w == "theorem" || w == "lemma" => {
                    if theorem.is_some() {
                        return Err(self.fail("more than one theorem"));
                    }
                    let start = self.next().1;
                    layout.theorem_line = line_of(self.text, start);
                    self.name()?;
                    self.punct(T::Colon, ":")?;
                    let mut premise = None;
                    let mut premise_text = None;
                    if self.is_word("assumes") {
                        self.next();
                        premise_text = self.take_comment("Premise");
                        let aname = self.name()?;
                        if aname != ASSUMPTION {
                            return Err(self.fail("the assumption must be named `asm`"));
                        }
                        self.punct(T::Colon, ":")?;
                        let (body, span) = self.string()?;
                        layout.premise = Some(span);
                        if body.trim() != "True" {
                            premise = Some(self.formula(&body, span)?);
                        }
                        if self.is_word("and") {
                            return Err(self.fail("only one assumption is supported"));
                        }
                    } else {
                        self.comment = None;
                    }
                    self.skip_comments();
                    let hypothesis_text = self.take_comment("Hypothesis").unwrap_or_default();
                    self.keyword("shows")?;
                    let (body, span) = self.string()?;
                    layout.goal = Some(span);
                    let goal = self.formula(&body, span)?;
                    theorem = Some(TheoremBlock { premise_assumption: premise, goal, premise_text, hypothesis_text });
                    proof = self.proof(&mut layout)?;
                }
                T::Eof => return Err(self.fail("expected `end`")),
                _ => return Err(self.fail("unexpected command")),
            }
        }
        if !matches!(self.peek(), T::Eof) {
            return Err(self.fail("text after `end`"));
        }
        layout.last_line = line_of(self.text, self.text.len());
        let theorem = theorem.ok_or_else(|| self.fail("theory has no theorem"))?;
        let doc = TheoryDoc { name, signature: declared.clone(), axioms, theorem, proof };
        Ok(ParsedTheory { doc, layout, declared })
    }

    fn is_keyword_start(&mut self) -> bool {
        ["axiomatization", "theorem", "lemma", "end", "typedecl", "consts", "definition"]
            .iter()
            .any(|k| self.is_word(k))
    }

    fn arity_of(&self, ty: &str, types: &[String], span: Span) -> Result<usize, TheoryParseError> {
        let normalised = ty.replace("\\<Rightarrow>", "⇒").replace("=>", "⇒");
        let parts: Vec<&str> = normalised.split('⇒').map(str::trim).collect();
        let bad = |msg: String| TheoryParseError {
            offset: span.start,
            end: span.end,
            line: span.line,
            message: msg,
            inner: true,
        };
        let (result, args) = parts.split_last().expect("split yields one part");
        if *result != "bool" {
            return Err(bad(format!("unsupported constant type {ty:?}")));
        }
        if args.is_empty() {
            return Err(bad("propositional constants are not supported".into()));
        }
        if let Some(unknown) = args.iter().find(|a| !types.iter().any(|t| t == *a)) {
            return Err(bad(format!("undefined type name: {unknown:?}")));
        }
        Ok(args.len())
    }

    fn method(&mut self) -> Result<String, TheoryParseError> {
        if matches!(self.peek(), T::LParen) {
            self.next();
            let mut words = Vec::new();
            while let T::Word(w) = self.peek().clone() {
                self.next();
                words.push(w);
            }
            self.punct(T::RParen, ")")?;
            Ok(words.join(" "))
        } else {
            self.name()
        }
    }

    fn proof(&mut self, layout: &mut TheoryLayout) -> Result<Vec<ProofStep>, TheoryParseError> {
        let start = self.tok().start;
        layout.proof_line = Some(line_of(self.text, start));
        if self.is_word("sorry") || self.is_word("oops") {
            self.next();
            return Ok(Vec::new());
        }
        if self.is_word("by") {
            self.next();
            let tactic = self.method()?;
            let end = self.toks[self.pos - 1].end;
            layout.steps.push(Span { line: line_of(self.text, start), start, end });
            let mut step = ProofStep::new(StepKind::ThenShowThesis, "?thesis", &[]);
            step.tactic = tactic;
            return Ok(vec![step]);
        }
        self.keyword("proof")?;
        if matches!(self.peek(), T::Dash) {
            self.next();
        }
        let mut steps = Vec::new();
        loop {
            if self.is_word("qed") {
                let at = self.next().1;
                layout.qed_line = Some(line_of(self.text, at));
                break;
            }
            let start = self.tok().start;
            let mut facts = Vec::new();
            let mut from = false;
            if self.is_word("then") {
                self.next();
            } else if self.is_word("from") {
                self.next();
                from = true;
                while let T::Word(w) = self.peek().clone() {
                    if w == "have" || w == "show" {
                        break;
                    }
                    self.next();
                    facts.push(w);
                }
            }
            let (kind, goal_text) = if self.is_word("have") {
                self.next();
                let (body, _) = self.string()?;
                (if from { StepKind::FromAsmHave } else { StepKind::ThenHave }, body)
            } else if self.is_word("show") {
                self.next();
                match self.peek().clone() {
                    T::Word(w) if w == "?thesis" => {
                        self.next();
                    }
                    T::Str(_) => {
                        self.string()?;
                    }
                    _ => return Err(self.fail("expected `?thesis`")),
                }
                (StepKind::ThenShowThesis, "?thesis".to_string())
            } else {
                return Err(self.fail("expected `have`, `show` or `qed`"));
            };
            if self.is_word("using") {
                self.next();
                while let T::Word(w) = self.peek().clone() {
                    if w == "by" {
                        break;
                    }
                    self.next();
                    facts.push(w);
                }
            }
            self.keyword("by")?;
            let tactic = self.method()?;
            let end = self.toks[self.pos - 1].end;
            layout.steps.push(Span { line: line_of(self.text, start), start, end });
            steps.push(ProofStep { kind, goal_text, facts_used: facts, tactic });
        }
        Ok(steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn rendered_theory_parses_back() {
        let doc = fixtures::violin_theory();
        let text = doc.render();
        let parsed = parse_theory(&text).unwrap();
        assert_eq!(parsed.doc, doc);
        assert_eq!(parsed.layout.axioms.len(), 1);
        assert_eq!(parsed.layout.steps.len(), 3);
        let second = parsed.layout.steps[1];
        assert!(text[second.start..second.end].ends_with("using explanation_1 by blast"));
        assert!(parsed.layout.in_proof(second.line));
        assert!(!parsed.layout.in_proof(parsed.layout.axioms[0].line));
    }

    #[test]
    fn unicode_and_plain_have_are_accepted() {
        let text = "theory T imports Main begin\n\
                    typedecl entity\n\
                    consts P :: \"entity ⇒ bool\" Q :: \"entity => bool\"\n\
                    axiomatization where ax: \"∀x. P x ⟶ Q x\"\n\
                    theorem hypothesis: assumes asm: \"P a\" shows \"∃x. Q x\"\n\
                    proof -\n  have \"Q a\" using asm ax by (blast)\n  from asm show ?thesis by auto\nqed\nend\n";
        let parsed = parse_theory(text).unwrap();
        assert_eq!(parsed.doc.proof.len(), 2);
        assert_eq!(parsed.doc.proof[0].kind, StepKind::ThenHave);
        assert_eq!(parsed.doc.proof[0].facts_used, ["asm", "ax"]);
        assert_eq!(parsed.doc.proof[1].kind, StepKind::ThenShowThesis);
        assert_eq!(parsed.doc.proof[1].tactic, "auto");
        assert_eq!(parsed.declared.arity("Q"), Some(1));
    }

    #[test]
    fn comments_may_hold_symbols() {
        let text = "theory T imports Main begin\ntypedecl entity\nconsts P :: \"entity ⇒ bool\"\n\
                    axiomatization where\n(* Explanation 1: ∀x. P x *)\nax: \"∀x. P x\"\n\
                    theorem hypothesis: shows \"∃x. P x\" sorry\nend\n";
        assert!(parse_theory(text).is_ok());
    }

    #[test]
    fn inner_error_position_points_into_string() {
        let text = "theory T imports Main begin\ntypedecl entity\nconsts P :: \"entity ⇒ bool\"\n\
                    axiomatization where ax: \"∀x. P x ⟶\"\ntheorem hypothesis: shows \"∃x. P x\" sorry\nend\n";
        let err = parse_theory(text).unwrap_err();
        assert!(err.inner);
        assert_eq!(err.line, 4);
        assert!(err.offset > text.find("ax:").unwrap());
    }

    #[test]
    fn outer_errors() {
        let missing_end = "theory T imports Main begin\ntypedecl entity\ntheorem hypothesis: shows \"\\<exists>x. P x\" sorry\n";
        assert!(!parse_theory(missing_end).unwrap_err().inner);
        let bad_type = "theory T imports Main begin\nconsts P :: \"thing ⇒ bool\"\nend\n";
        assert!(parse_theory(bad_type).unwrap_err().message.contains("undefined type"));
        let no_theorem = "theory T imports Main begin\nend\n";
        assert!(parse_theory(no_theorem).is_err());
    }
}
