//! Ground-enumeration entailment over a finite domain, and the oracle
//! backend that checks theory text with it.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use super::sat::{solve, Cnf, Lit, SatResult};
use super::{ProverMessage, Severity};
use crate::logic::{free_variables, parse_formula_unchecked, Formula, Signature, Syntax, Variable};
use crate::theory::{parse_theory, ParsedTheory, Span, StepKind, ASSUMPTION};

/// Outcome of a single entailment question.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entailment {
    Holds,
    Fails,
    TimedOut,
}

#[derive(Debug)]
struct TimeUp;

/// Ground formula in negation normal form.
#[derive(Clone, Debug)]
enum G {
    Const(bool),
    Lit(Lit),
    And(Vec<G>),
    Or(Vec<G>),
}

fn and_all(parts: Vec<G>) -> G {
    let mut out = Vec::with_capacity(parts.len());
    for p in parts {
        match p {
            G::Const(true) => {}
            G::Const(false) => return G::Const(false),
            G::And(inner) => out.extend(inner),
            other => out.push(other),
        }
    }
    match out.len() {
        0 => G::Const(true),
        1 => out.pop().unwrap(),
        _ => G::And(out),
    }
}

fn or_all(parts: Vec<G>) -> G {
    let mut out = Vec::with_capacity(parts.len());
    for p in parts {
        match p {
            G::Const(false) => {}
            G::Const(true) => return G::Const(true),
            G::Or(inner) => out.extend(inner),
            other => out.push(other),
        }
    }
    match out.len() {
        0 => G::Const(false),
        1 => out.pop().unwrap(),
        _ => G::Or(out),
    }
}

/// Grounds formulas over `domain` constants, interning ground atoms as SAT
/// variables.
struct Grounder<'d> {
    domain: usize,
    /// Free variables bound to fixed constants.
    fixed: &'d HashMap<String, usize>,
    atoms: HashMap<(String, Vec<usize>), u32>,
    cnf: Cnf,
    deadline: Option<Instant>,
    work: u64,
}

impl<'d> Grounder<'d> {
    fn tick(&mut self) -> Result<(), TimeUp> {
        self.work += 1;
        if self.work.is_multiple_of(4096) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(TimeUp);
        }
        Ok(())
    }

    fn atom(&mut self, pred: &str, args: Vec<usize>) -> Lit {
        let key = (pred.to_string(), args);
        if let Some(&v) = self.atoms.get(&key) {
            return Lit::pos(v);
        }
        let v = self.cnf.fresh_var();
        self.atoms.insert(key, v);
        Lit::pos(v)
    }

    fn lookup(&self, env: &[(String, usize)], var: &Variable) -> usize {
        env.iter()
            .rev()
            .find(|(n, _)| n == var.name())
            .map(|(_, c)| *c)
            .or_else(|| self.fixed.get(var.name()).copied())
            .expect("closed over fixed constants")
    }

    /// Ground `f` under `env`, negated when `negate` is set, in NNF.
    fn ground(&mut self, f: &Formula, env: &mut Vec<(String, usize)>, negate: bool) -> Result<G, TimeUp> {
        self.tick()?;
        Ok(match f {
            Formula::Atom { pred, args } => {
                let consts = args.iter().map(|a| self.lookup(env, a)).collect();
                let l = self.atom(pred, consts);
                G::Lit(if negate { l.negate() } else { l })
            }
            Formula::Not(inner) => self.ground(inner, env, !negate)?,
            Formula::And(l, r) => {
                let parts = vec![self.ground(l, env, negate)?, self.ground(r, env, negate)?];
                if negate {
                    or_all(parts)
                } else {
                    and_all(parts)
                }
            }
            Formula::Or(l, r) => {
                let parts = vec![self.ground(l, env, negate)?, self.ground(r, env, negate)?];
                if negate {
                    and_all(parts)
                } else {
                    or_all(parts)
                }
            }
            Formula::Implies(l, r) => {
                let parts = vec![self.ground(l, env, !negate)?, self.ground(r, env, negate)?];
                if negate {
                    and_all(parts)
                } else {
                    or_all(parts)
                }
            }
            Formula::Forall { vars, body } => {
                let inst = self.instances(vars, body, env, negate)?;
                if negate {
                    or_all(inst)
                } else {
                    and_all(inst)
                }
            }
            Formula::Exists { vars, body } => {
                let inst = self.instances(vars, body, env, negate)?;
                if negate {
                    and_all(inst)
                } else {
                    or_all(inst)
                }
            }
        })
    }

    fn instances(
        &mut self,
        vars: &[Variable],
        body: &Formula,
        env: &mut Vec<(String, usize)>,
        negate: bool,
    ) -> Result<Vec<G>, TimeUp> {
        let mut out = Vec::new();
        let mut tuple = vec![0usize; vars.len()];
        loop {
            for (v, &c) in vars.iter().zip(&tuple) {
                env.push((v.name().to_string(), c));
            }
            let g = self.ground(body, env, negate);
            env.truncate(env.len() - vars.len());
            out.push(g?);
            // Next tuple in lexicographic order.
            let mut i = vars.len();
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                tuple[i] += 1;
                if tuple[i] < self.domain {
                    break;
                }
                tuple[i] = 0;
            }
        }
    }

    /// Plaisted-Greenbaum encoding: the returned literal implies `g`.
    fn encode(&mut self, g: &G) -> Lit {
        match g {
            G::Lit(l) => *l,
            G::Const(b) => {
                let v = self.cnf.fresh_var();
                self.cnf.add_clause(vec![if *b { Lit::pos(v) } else { Lit::neg(v) }]);
                Lit::pos(v)
            }
            G::And(parts) => {
                let v = self.cnf.fresh_var();
                for p in parts {
                    let l = self.encode(p);
                    self.cnf.add_clause(vec![Lit::neg(v), l]);
                }
                Lit::pos(v)
            }
            G::Or(parts) => {
                let v = self.cnf.fresh_var();
                let mut clause = vec![Lit::neg(v)];
                for p in parts {
                    clause.push(self.encode(p));
                }
                self.cnf.add_clause(clause);
                Lit::pos(v)
            }
        }
    }

    fn assert(&mut self, g: &G) {
        match g {
            G::Const(true) => {}
            G::Const(false) => self.cnf.add_clause(vec![]),
            G::Lit(l) => self.cnf.add_clause(vec![*l]),
            G::And(parts) => {
                for p in parts {
                    self.assert(p);
                }
            }
            G::Or(parts) => {
                let clause = parts.iter().map(|p| self.encode(p)).collect();
                self.cnf.add_clause(clause);
            }
        }
    }
}

/// Constants for a check: the given free variables in order, then `fresh`
/// anonymous ones.
#[derive(Clone, Debug)]
pub struct Domain {
    pub named: Vec<String>,
    pub fresh: usize,
}

impl Domain {
    pub fn size(&self) -> usize {
        self.named.len() + self.fresh
    }
}

/// Whether `premises ⊨ goal` over `domain`. Free variables of the formulas
/// must appear in `domain.named`; they denote fixed constants.
pub fn entails(premises: &[&Formula], goal: &Formula, domain: &Domain, deadline: Option<Instant>) -> Entailment {
    let fixed: HashMap<String, usize> = domain.named.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let size = domain.size().max(1);
    let mut g = Grounder { domain: size, fixed: &fixed, atoms: HashMap::new(), cnf: Cnf::new(), deadline, work: 0 };
    let run = |g: &mut Grounder| -> Result<(), TimeUp> {
        let mut env = Vec::new();
        for p in premises {
            let gp = g.ground(p, &mut env, false)?;
            g.assert(&gp);
        }
        let ng = g.ground(goal, &mut env, true)?;
        g.assert(&ng);
        Ok(())
    };
    if run(&mut g).is_err() {
        return Entailment::TimedOut;
    }
    match solve(g.cnf, deadline) {
        SatResult::Unsat => Entailment::Holds,
        SatResult::Sat(_) => Entailment::Fails,
        SatResult::Timeout => Entailment::TimedOut,
    }
}

/// Universal closure over the formula's free variables.
fn close(f: &Formula) -> Formula {
    let free = free_variables(f);
    if free.is_empty() {
        f.clone()
    } else {
        Formula::Forall { vars: free.into_iter().collect(), body: Box::new(f.clone()) }
    }
}

fn error(text: String, span: Option<Span>) -> ProverMessage {
    ProverMessage { severity: Severity::Error, text, span }
}

/// Oracle verdict on a theory text: messages plus whether the deadline hit.
pub(crate) struct OracleOutcome {
    pub messages: Vec<ProverMessage>,
    pub timed_out: bool,
    pub parsed: Option<ParsedTheory>,
}

fn syntax_messages(text: &str) -> Result<ParsedTheory, ProverMessage> {
    parse_theory(text).map_err(|e| {
        let span = Span { line: e.line, start: e.offset.min(text.len()), end: e.end.clamp(e.offset, text.len()) };
        let head = if e.inner { "Inner syntax error\u{2302}" } else { "Outer syntax error\u{2302}" };
        error(format!("{head}\n{}", e.message), Some(span))
    })
}

/// Arity clashes against the declared (or first-use) signature, phrased the
/// way the prover reports type unification failures.
fn type_messages(formula: &Formula, sig: &mut Signature, span: Span) -> Option<ProverMessage> {
    for (pred, args) in formula.atoms() {
        match sig.arity(pred) {
            Some(d) if d != args.len() => {
                let expected = arrow(d);
                let actual = arrow(args.len());
                return Some(error(
                    format!(
                        "Type unification failed: Clash of types \"{actual}\" and \"{expected}\"\n\n\
                         Type error in application: incompatible operand type\n\n\
                         Operator:  {pred} :: {expected}"
                    ),
                    Some(span),
                ));
            }
            Some(_) => {}
            None => {
                let _ = sig.declare(pred, args.len());
            }
        }
    }
    None
}

fn arrow(arity: usize) -> String {
    let mut s = String::new();
    for _ in 0..arity {
        s.push_str("entity \\<Rightarrow> ");
    }
    s.push_str("bool");
    s
}

/// Checks `text` the way the prover would: syntax, types, then each proof
/// step as an entailment from its chained and cited facts.
pub(crate) fn check_text(text: &str, domain_bound: usize, timeout: Duration) -> OracleOutcome {
    let deadline = Instant::now() + timeout;
    let parsed = match syntax_messages(text) {
        Ok(p) => p,
        Err(msg) => return OracleOutcome { messages: vec![msg], timed_out: false, parsed: None },
    };
    let doc = &parsed.doc;
    let layout = &parsed.layout;
    let mut messages = Vec::new();

    let mut sig = parsed.declared.clone();
    for (ax, span) in doc.axioms.iter().zip(&layout.axioms) {
        messages.extend(type_messages(&ax.formula, &mut sig, *span));
    }
    if let (Some(p), Some(span)) = (&doc.theorem.premise_assumption, layout.premise) {
        messages.extend(type_messages(p, &mut sig, span));
    }
    if let Some(span) = layout.goal {
        messages.extend(type_messages(&doc.theorem.goal, &mut sig, span));
    }

    // Step claims are parsed here so their errors carry the step's span.
    let mut claims: Vec<Option<Formula>> = Vec::new();
    for (step, span) in doc.proof.iter().zip(&layout.steps) {
        if step.kind == StepKind::ThenShowThesis {
            claims.push(Some(doc.theorem.goal.clone()));
            continue;
        }
        match parse_formula_unchecked(&step.goal_text, Syntax::Prover) {
            Ok(f) => {
                messages.extend(type_messages(&f, &mut sig, *span));
                claims.push(Some(f));
            }
            Err(e) => {
                messages.push(error(format!("Inner syntax error\u{2302}\nFailed to parse prop: {e}"), Some(*span)));
                claims.push(None);
            }
        }
    }
    if !messages.is_empty() {
        return OracleOutcome { messages, timed_out: false, parsed: Some(parsed) };
    }

    let mut named: Vec<String> = Vec::new();
    let mut add_free = |f: &Formula| {
        for v in free_variables(f) {
            if !named.iter().any(|n| n == v.name()) {
                named.push(v.name().to_string());
            }
        }
    };
    if let Some(p) = &doc.theorem.premise_assumption {
        add_free(p);
    }
    add_free(&doc.theorem.goal);
    for c in claims.iter().flatten() {
        add_free(c);
    }
    let domain = Domain { named, fresh: domain_bound };

    let axioms: HashMap<&str, Formula> = doc.axioms.iter().map(|a| (a.name.as_str(), close(&a.formula))).collect();
    let premise = doc.theorem.premise_assumption.as_ref();
    let one_liner = layout.qed_line.is_none();

    let mut timed_out = false;
    let mut prev: Option<&Formula> = None;
    for (i, (step, span)) in doc.proof.iter().zip(&layout.steps).enumerate() {
        let claim = claims[i].as_ref().expect("claims parsed");
        let mut facts: Vec<&Formula> = Vec::new();
        if matches!(step.kind, StepKind::ThenHave | StepKind::ThenShowThesis) {
            facts.extend(prev);
        }
        let mut cited: BTreeSet<&str> = step.cited_facts().into_iter().collect();
        if one_liner {
            cited.insert(ASSUMPTION);
        }
        let mut undefined = None;
        for name in &cited {
            if *name == ASSUMPTION {
                facts.extend(premise);
            } else if let Some(ax) = axioms.get(name) {
                facts.push(ax);
            } else {
                undefined = Some(*name);
            }
        }
        prev = Some(claim);
        if let Some(name) = undefined {
            messages.push(error(format!("Undefined fact: \"{name}\""), Some(*span)));
            continue;
        }
        match entails(&facts, claim, &domain, Some(deadline)) {
            Entailment::Holds => {}
            Entailment::Fails => messages.push(error(
                format!(
                    "Failed to apply proof method\u{2302}:\ngoal (1 subgoal):\n 1. {}",
                    crate::logic::render_prover(claim, crate::logic::SymbolStyle::Escaped)
                ),
                Some(*span),
            )),
            Entailment::TimedOut => {
                messages.push(error(format!("Timeout after {} s", timeout.as_secs_f64()), Some(*span)));
                timed_out = true;
                break;
            }
        }
    }
    OracleOutcome { messages, timed_out, parsed: Some(parsed) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    fn dom(named: &[&str], fresh: usize) -> Domain {
        Domain { named: named.iter().map(|s| s.to_string()).collect(), fresh }
    }

    #[test]
    fn modus_ponens_holds() {
        let ax = f("∀x. Violin(x) → Instrument(x)");
        let p = f("Violin(y)");
        assert_eq!(entails(&[&ax, &p], &f("Instrument(y)"), &dom(&["y"], 2), None), Entailment::Holds);
        assert_eq!(entails(&[&p], &f("Instrument(y)"), &dom(&["y"], 2), None), Entailment::Fails);
    }

    #[test]
    fn existential_goal_from_witness() {
        let p = f("Woman(x) ∧ Playing(e) ∧ Agent(e, x)");
        let goal = f("∃a b. Woman(a) ∧ Agent(b, a)");
        assert_eq!(entails(&[&p], &goal, &dom(&["x", "e"], 1), None), Entailment::Holds);
    }

    #[test]
    fn violin_theory_checks_clean() {
        let text = crate::fixtures::violin_theory().render();
        let out = check_text(&text, 4, Duration::from_secs(10));
        assert!(out.messages.is_empty(), "{:?}", out.messages);
    }

    #[test]
    fn unsupported_step_is_reported_at_its_line() {
        let mut doc = crate::fixtures::violin_theory();
        doc.axioms.clear();
        let doc = crate::theory::TheoryDoc::new(&doc.name, doc.axioms, doc.theorem).with_proof(vec![
            crate::theory::ProofStep::new(StepKind::FromAsmHave, "Violin y", &["asm"]),
            crate::theory::ProofStep::new(StepKind::ThenShowThesis, "?thesis", &[]),
        ]);
        let text = doc.render();
        let out = check_text(&text, 2, Duration::from_secs(10));
        assert_eq!(out.messages.len(), 1);
        let parsed = out.parsed.unwrap();
        assert_eq!(out.messages[0].span.unwrap().line, parsed.layout.steps[1].line);
        assert!(out.messages[0].text.starts_with("Failed to apply proof method"));
    }

    #[test]
    fn arity_clash_is_a_type_error() {
        let text = crate::fixtures::violin_theory().render().replace("Instrument x\"", "Instrument x x\"");
        let out = check_text(&text, 2, Duration::from_secs(10));
        assert!(out.messages[0].text.starts_with("Type unification failed"), "{:?}", out.messages);
    }
}
