use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{is_identifier, is_reserved, ArityConflict, Formula, Variable};

/// Which concrete syntax a string is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Syntax {
    /// `Name(x, y)` atoms.
    Canonical,
    /// Prover inner syntax: `Name x y` atoms by juxtaposition.
    Prover,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: expected {}, found {found}", expected_list(.expected))]
pub struct ParseError {
    pub offset: usize,
    pub expected: BTreeSet<String>,
    pub found: String,
}

fn expected_list(e: &BTreeSet<String>) -> String {
    e.iter().cloned().collect::<Vec<_>>().join(" or ")
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("inconsistent arity: {0}")]
    Arity(ArityConflict),
}

/// Parses canonical syntax and checks that each predicate is used with a
/// single arity.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let f = Parser::new(text, Syntax::Canonical).parse_complete()?;
    check_arity(&f)?;
    Ok(f)
}

/// Parses without the arity check; callers that type-check against a
/// declared signature use this.
pub fn parse_formula_unchecked(text: &str, syntax: Syntax) -> Result<Formula, ParseError> {
    Parser::new(text, syntax).parse_complete()
}

/// Parses prover inner syntax (Unicode, `\<...>` escapes or ASCII operators).
pub fn parse_prover_formula(text: &str) -> Result<Formula, FormulaError> {
    let f = Parser::new(text, Syntax::Prover).parse_complete()?;
    check_arity(&f)?;
    Ok(f)
}

fn check_arity(f: &Formula) -> Result<(), FormulaError> {
    let mut seen: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (pred, args) in f.atoms() {
        seen.entry(pred).or_default().insert(args.len());
    }
    match seen.into_iter().find(|(_, arities)| arities.len() > 1) {
        Some((name, arities)) => Err(FormulaError::Arity(ArityConflict {
            name: name.to_string(),
            arities,
            locations: vec![0],
        })),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Forall,
    Exists,
    And,
    Or,
    Implies,
    Not,
    LParen,
    RParen,
    Comma,
    Dot,
    Eof,
    Bad(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Forall => "`∀`".into(),
            Tok::Exists => "`∃`".into(),
            Tok::And => "`∧`".into(),
            Tok::Or => "`∨`".into(),
            Tok::Implies => "`→`".into(),
            Tok::Not => "`¬`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eof => "end of input".into(),
            Tok::Bad(s) => format!("unexpected `{s}`"),
        }
    }
}

/// Operator spellings, longest first so that `-->` wins over `->`.
const SYMBOLS: &[(&str, Tok)] = &[
    ("\\<longrightarrow>", Tok::Implies),
    ("\\<forall>", Tok::Forall),
    ("\\<exists>", Tok::Exists),
    ("\\<and>", Tok::And),
    ("\\<or>", Tok::Or),
    ("\\<not>", Tok::Not),
    ("-->", Tok::Implies),
    ("->", Tok::Implies),
    ("/\\", Tok::And),
    ("\\/", Tok::Or),
    ("∀", Tok::Forall),
    ("∃", Tok::Exists),
    ("∧", Tok::And),
    ("∨", Tok::Or),
    ("→", Tok::Implies),
    ("⟶", Tok::Implies),
    ("¬", Tok::Not),
    ("&", Tok::And),
    ("|", Tok::Or),
    ("~", Tok::Not),
    ("(", Tok::LParen),
    (")", Tok::RParen),
    (",", Tok::Comma),
    (".", Tok::Dot),
];

fn lex(text: &str) -> Vec<(Tok, usize)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    'outer: while i < text.len() {
        let rest = &text[i..];
        let c = rest.chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c.is_ascii_alphabetic() {
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            let word = &text[i..j];
            let tok = match word {
                "forall" | "ALL" => Tok::Forall,
                "exists" | "EX" => Tok::Exists,
                _ => Tok::Ident(word.to_string()),
            };
            out.push((tok, i));
            i = j;
            continue;
        }
        for (sym, tok) in SYMBOLS {
            if rest.starts_with(sym) {
                out.push((tok.clone(), i));
                i += sym.len();
                continue 'outer;
            }
        }
        out.push((Tok::Bad(c.to_string()), i));
        i += c.len_utf8();
    }
    out.push((Tok::Eof, text.len()));
    out
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    syntax: Syntax,
}

impl Parser {
    fn new(text: &str, syntax: Syntax) -> Self {
        Parser { toks: lex(text), pos: 0, syntax }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[name]))
        }
    }

    fn parse_complete(mut self) -> Result<Formula, ParseError> {
        let f = self.implication()?;
        if *self.peek() != Tok::Eof {
            return Err(self.error(&["`∧`", "`∨`", "`→`", "end of input"]));
        }
        Ok(f)
    }

    fn implication(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.implication()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.conjunction()?;
        if *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.disjunction()?;
            return Ok(Formula::or(lhs, rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.unary()?;
        if *self.peek() == Tok::And {
            self.bump();
            let rhs = self.conjunction()?;
            return Ok(Formula::and(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::LParen => {
                self.bump();
                let f = self.implication()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Forall | Tok::Exists => self.quantified(),
            Tok::Ident(_) => self.atom(),
            _ => Err(self.error(&["`¬`", "`(`", "`∀`", "`∃`", "predicate"])),
        }
    }

    fn quantified(&mut self) -> Result<Formula, ParseError> {
        let universal = self.bump() == Tok::Forall;
        let mut vars: Vec<Variable> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Ident(name) if !is_reserved(&name) => {
                    let v = Variable(name);
                    if vars.contains(&v) {
                        return Err(self.error(&["distinct variable"]));
                    }
                    vars.push(v);
                    self.bump();
                }
                Tok::Comma if !vars.is_empty() => {
                    self.bump();
                    if !matches!(self.peek(), Tok::Ident(_)) {
                        return Err(self.error(&["variable"]));
                    }
                }
                Tok::Dot if !vars.is_empty() => {
                    self.bump();
                    break;
                }
                _ if vars.is_empty() => return Err(self.error(&["variable"])),
                _ => return Err(self.error(&["variable", "`.`"])),
            }
        }
        let body = Box::new(self.implication()?);
        Ok(if universal { Formula::Forall { vars, body } } else { Formula::Exists { vars, body } })
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let pred = match self.bump() {
            Tok::Ident(name) => name,
            _ => unreachable!("atom called on non-identifier"),
        };
        debug_assert!(is_identifier(&pred));
        let mut args = Vec::new();
        match self.syntax {
            Syntax::Canonical => {
                self.expect(Tok::LParen, "`(`")?;
                loop {
                    match self.peek().clone() {
                        Tok::Ident(a) if !is_reserved(&a) => {
                            self.bump();
                            args.push(Variable(a));
                        }
                        _ => return Err(self.error(&["variable"])),
                    }
                    match self.peek() {
                        Tok::Comma => {
                            self.bump();
                        }
                        Tok::RParen => {
                            self.bump();
                            break;
                        }
                        _ => return Err(self.error(&["`,`", "`)`"])),
                    }
                }
            }
            Syntax::Prover => {
                while let Tok::Ident(a) = self.peek().clone() {
                    self.bump();
                    args.push(Variable(a));
                }
                if args.is_empty() {
                    return Err(self.error(&["argument"]));
                }
            }
        }
        Ok(Formula::Atom { pred, args })
    }
}
