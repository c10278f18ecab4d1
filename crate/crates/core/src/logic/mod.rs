//! First-order logical forms with Neo-Davidsonian event predicates.
//!
//! Formulas are function-free and equality-free: atoms apply a predicate
//! symbol to variables only. Entities and events live in one universe sort,
//! so `Agent(e, x)` and `Woman(x)` range over the same domain.
//!
//! Two concrete syntaxes share one lexer and parser:
//!
//! * the canonical exchange syntax, `∀x. Violin(x) → Instrument(x)`, used
//!   between the pipeline and the language model;
//! * the prover's inner syntax, `\<forall>x. Violin x \<longrightarrow> Instrument x`,
//!   used inside theory files.

mod render;
mod sanitize;
mod syntax;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{render_formula, render_prover, SymbolStyle};
pub use sanitize::{sanitize_identifier, NameTable};
pub use syntax::{parse_formula, parse_formula_unchecked, parse_prover_formula, Syntax};

/// A bound or free individual variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Variable(String);

impl Variable {
    /// Builds a variable, rejecting names outside `[a-zA-Z][a-zA-Z0-9_]*`.
    pub fn new(name: impl Into<String>) -> Result<Self, InvalidIdentifier> {
        let name = name.into();
        if is_identifier(&name) && !is_reserved(&name) {
            Ok(Variable(name))
        } else {
            Err(InvalidIdentifier(name))
        }
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invalid identifier {0:?}")]
pub struct InvalidIdentifier(pub String);

/// A predicate name together with its arity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredicateSymbol {
    pub name: String,
    pub arity: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantifier {
    Forall,
    Exists,
}

/// Logical form AST.
///
/// Binary connectives are right-associative when printed; `And(a, And(b, c))`
/// prints as `a ∧ b ∧ c` and the left-nested shape gets parentheses.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    Atom { pred: String, args: Vec<Variable> },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall { vars: Vec<Variable>, body: Box<Formula> },
    Exists { vars: Vec<Variable>, body: Box<Formula> },
}

impl Formula {
    /// Convenience constructor for tests and fixtures. Panics on bad names.
    pub fn atom(pred: &str, args: &[&str]) -> Formula {
        assert!(is_identifier(pred), "bad predicate name {pred:?}");
        Formula::Atom {
            pred: pred.to_string(),
            args: args.iter().map(|a| Variable::new(*a).expect("bad variable")).collect(),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Formula {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Formula {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Formula {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn forall(vars: &[&str], body: Formula) -> Formula {
        Formula::Forall {
            vars: vars.iter().map(|v| Variable::new(*v).expect("bad variable")).collect(),
            body: Box::new(body),
        }
    }

    pub fn exists(vars: &[&str], body: Formula) -> Formula {
        Formula::Exists {
            vars: vars.iter().map(|v| Variable::new(*v).expect("bad variable")).collect(),
            body: Box::new(body),
        }
    }

    /// Right-nested conjunction of the given formulas. `None` when empty.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Formula> {
        let mut parts: Vec<Formula> = parts.into_iter().collect();
        let mut acc = parts.pop()?;
        while let Some(f) = parts.pop() {
            acc = Formula::and(f, acc);
        }
        Some(acc)
    }

    /// Flattens a right-nested conjunction into its conjuncts.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Formula::And(l, r) => {
                    out.extend(l.conjuncts());
                    cur = r;
                }
                other => {
                    out.push(other);
                    return out;
                }
            }
        }
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::Atom { .. } => true,
            Formula::Not(f) => f.is_quantifier_free(),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.is_quantifier_free() && r.is_quantifier_free()
            }
            Formula::Forall { .. } | Formula::Exists { .. } => false,
        }
    }

    /// True for an atom or a conjunction built only from atoms.
    pub fn is_atom_conjunction(&self) -> bool {
        self.conjuncts().iter().all(|c| matches!(c, Formula::Atom { .. }))
    }

    pub fn is_closed(&self) -> bool {
        free_variables(self).is_empty()
    }

    /// Every atom in the formula, left to right.
    pub fn atoms(&self) -> Vec<(&str, &[Variable])> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |p, a| out.push((p, a)));
        out
    }

    fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a [Variable])) {
        match self {
            Formula::Atom { pred, args } => f(pred, args),
            Formula::Not(g) => g.visit_atoms(f),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.visit_atoms(f);
                r.visit_atoms(f);
            }
            Formula::Forall { body, .. } | Formula::Exists { body, .. } => body.visit_atoms(f),
        }
    }

    /// Merges directly nested binders of the same kind, `∀x. ∀y. φ` into
    /// `∀x y. φ`. Binders are left alone when the inner prefix would repeat
    /// a variable of the outer one.
    pub fn flatten_quantifiers(self) -> Formula {
        match self {
            Formula::Atom { .. } => self,
            Formula::Not(f) => Formula::Not(Box::new(f.flatten_quantifiers())),
            Formula::And(l, r) => Formula::and(l.flatten_quantifiers(), r.flatten_quantifiers()),
            Formula::Or(l, r) => Formula::or(l.flatten_quantifiers(), r.flatten_quantifiers()),
            Formula::Implies(l, r) => {
                Formula::implies(l.flatten_quantifiers(), r.flatten_quantifiers())
            }
            Formula::Forall { mut vars, body } => match body.flatten_quantifiers() {
                Formula::Forall { vars: inner, body } if disjoint(&vars, &inner) => {
                    vars.extend(inner);
                    Formula::Forall { vars, body }
                }
                body => Formula::Forall { vars, body: Box::new(body) },
            },
            Formula::Exists { mut vars, body } => match body.flatten_quantifiers() {
                Formula::Exists { vars: inner, body } if disjoint(&vars, &inner) => {
                    vars.extend(inner);
                    Formula::Exists { vars, body }
                }
                body => Formula::Exists { vars, body: Box::new(body) },
            },
        }
    }

    /// Checks the structural invariants the printers rely on: non-empty
    /// binder prefixes without repeats and non-empty argument lists.
    pub fn check_well_formed(&self) -> Result<(), String> {
        match self {
            Formula::Atom { pred, args } => {
                if !is_identifier(pred) || is_reserved(pred) {
                    return Err(format!("invalid predicate name {pred:?}"));
                }
                if args.is_empty() {
                    return Err(format!("predicate {pred} applied to no arguments"));
                }
                Ok(())
            }
            Formula::Not(f) => f.check_well_formed(),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.check_well_formed()?;
                r.check_well_formed()
            }
            Formula::Forall { vars, body } | Formula::Exists { vars, body } => {
                if vars.is_empty() {
                    return Err("quantifier without variables".into());
                }
                let unique: BTreeSet<&Variable> = vars.iter().collect();
                if unique.len() != vars.len() {
                    return Err("repeated variable in quantifier prefix".into());
                }
                body.check_well_formed()
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_formula(self))
    }
}

fn disjoint(a: &[Variable], b: &[Variable]) -> bool {
    !b.iter().any(|v| a.contains(v)) && {
        let set: BTreeSet<&Variable> = b.iter().collect();
        set.len() == b.len()
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn is_reserved(s: &str) -> bool {
    matches!(s, "forall" | "exists" | "ALL" | "EX")
}

/// Variables occurring outside the scope of any binder for them.
pub fn free_variables(f: &Formula) -> BTreeSet<Variable> {
    fn go(f: &Formula, bound: &mut Vec<Variable>, out: &mut BTreeSet<Variable>) {
        match f {
            Formula::Atom { args, .. } => {
                for a in args {
                    if !bound.contains(a) {
                        out.insert(a.clone());
                    }
                }
            }
            Formula::Not(g) => go(g, bound, out),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                go(l, bound, out);
                go(r, bound, out);
            }
            Formula::Forall { vars, body } | Formula::Exists { vars, body } => {
                let mark = bound.len();
                bound.extend(vars.iter().cloned());
                go(body, bound, out);
                bound.truncate(mark);
            }
        }
    }
    let mut out = BTreeSet::new();
    go(f, &mut Vec::new(), &mut out);
    out
}

/// Predicate symbols over the single universe sort.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    predicates: BTreeMap<String, usize>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.predicates.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    /// Records `name/arity`. Returns the previously declared arity on a clash
    /// and leaves the first declaration in place.
    pub fn declare(&mut self, name: &str, arity: usize) -> Result<(), usize> {
        match self.predicates.get(name) {
            Some(&known) if known != arity => Err(known),
            Some(_) => Ok(()),
            None => {
                self.predicates.insert(name.to_string(), arity);
                Ok(())
            }
        }
    }

    /// Symbols in name order.
    pub fn symbols(&self) -> impl Iterator<Item = PredicateSymbol> + '_ {
        self.predicates.iter().map(|(name, &arity)| PredicateSymbol { name: name.clone(), arity })
    }

    /// First-use signature of the given formulas. Later conflicting uses are
    /// ignored; see [`validate_signature`] for the strict check.
    pub fn lenient<'a>(fs: impl IntoIterator<Item = &'a Formula>) -> Signature {
        let mut sig = Signature::new();
        for f in fs {
            for (pred, args) in f.atoms() {
                let _ = sig.declare(pred, args.len());
            }
        }
        sig
    }
}

/// A predicate used with more than one arity. `locations` are indices into
/// the formula list given to [`validate_signature`].
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("predicate {name} used with arities {arities:?} (formulas {locations:?})")]
pub struct ArityConflict {
    pub name: String,
    pub arities: BTreeSet<usize>,
    pub locations: Vec<usize>,
}

/// Merges the signatures of `fs`, failing with every arity conflict found.
pub fn validate_signature(fs: &[Formula]) -> Result<Signature, Vec<ArityConflict>> {
    let mut uses: BTreeMap<&str, BTreeMap<usize, BTreeSet<usize>>> = BTreeMap::new();
    for (i, f) in fs.iter().enumerate() {
        for (pred, args) in f.atoms() {
            uses.entry(pred).or_default().entry(args.len()).or_default().insert(i);
        }
    }
    let mut sig = Signature::new();
    let mut conflicts = Vec::new();
    for (name, by_arity) in uses {
        if by_arity.len() == 1 {
            let arity = *by_arity.keys().next().unwrap();
            sig.predicates.insert(name.to_string(), arity);
        } else {
            let locations: BTreeSet<usize> = by_arity.values().flatten().copied().collect();
            conflicts.push(ArityConflict {
                name: name.to_string(),
                arities: by_arity.keys().copied().collect(),
                locations: locations.into_iter().collect(),
            });
        }
    }
    if conflicts.is_empty() {
        Ok(sig)
    } else {
        Err(conflicts)
    }
}
