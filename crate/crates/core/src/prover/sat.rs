//! Small DPLL solver with two watched literals and chronological
//! backtracking. Adequate for the ground instances the oracle produces
//! (thousands of variables, mostly Horn-like clauses).

use std::time::Instant;

/// A literal: variable index shifted left once, low bit set when negated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lit(u32);

impl Lit {
    pub fn pos(var: u32) -> Lit {
        Lit(var << 1)
    }

    pub fn neg(var: u32) -> Lit {
        Lit((var << 1) | 1)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn negate(self) -> Lit {
        Lit(self.0 ^ 1)
    }

    fn code(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Default)]
pub struct Cnf {
    num_vars: u32,
    clauses: Vec<Vec<Lit>>,
}

impl Cnf {
    pub fn new() -> Self {
        Cnf::default()
    }

    pub fn fresh_var(&mut self) -> u32 {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_clause(&mut self, mut lits: Vec<Lit>) {
        lits.sort_by_key(|l| l.0);
        lits.dedup();
        if lits.windows(2).any(|w| w[0].var() == w[1].var()) {
            return; // tautology
        }
        self.clauses.push(lits);
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Vec<bool>),
    Unsat,
    Timeout,
}

const UNSET: i8 = 0;

struct Solver {
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<usize>>,
    value: Vec<i8>,
    trail: Vec<Lit>,
    qhead: usize,
    /// Trail length at each decision, with whether the decision was flipped.
    levels: Vec<(usize, bool)>,
}

impl Solver {
    fn lit_value(&self, l: Lit) -> i8 {
        let v = self.value[l.var() as usize];
        if l.is_neg() {
            -v
        } else {
            v
        }
    }

    fn assign(&mut self, l: Lit) {
        self.value[l.var() as usize] = if l.is_neg() { -1 } else { 1 };
        self.trail.push(l);
    }

    /// Returns false on conflict.
    fn propagate(&mut self) -> bool {
        while self.qhead < self.trail.len() {
            let falsified = self.trail[self.qhead].negate();
            self.qhead += 1;
            let mut watchers = std::mem::take(&mut self.watches[falsified.code()]);
            let mut i = 0;
            let mut ok = true;
            while i < watchers.len() {
                let ci = watchers[i];
                let clause = &mut self.clauses[ci];
                if clause[0] == falsified {
                    clause.swap(0, 1);
                }
                let first = clause[0];
                let first_val = {
                    let v = self.value[first.var() as usize];
                    if first.is_neg() {
                        -v
                    } else {
                        v
                    }
                };
                if first_val == 1 {
                    i += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..clause.len() {
                    let l = clause[k];
                    let v = self.value[l.var() as usize];
                    let lv = if l.is_neg() { -v } else { v };
                    if lv != -1 {
                        clause.swap(1, k);
                        self.watches[clause[1].code()].push(ci);
                        watchers.swap_remove(i);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                if first_val == -1 {
                    ok = false;
                    break;
                }
                self.assign(first);
                i += 1;
            }
            self.watches[falsified.code()].extend(watchers);
            if !ok {
                return false;
            }
        }
        true
    }

    fn backtrack_to(&mut self, trail_len: usize) {
        for l in self.trail.drain(trail_len..) {
            self.value[l.var() as usize] = UNSET;
        }
        self.qhead = trail_len;
    }
}

/// Decides satisfiability; `deadline` bounds wall-clock time.
pub fn solve(cnf: Cnf, deadline: Option<Instant>) -> SatResult {
    let n = cnf.num_vars as usize;
    let mut solver = Solver {
        clauses: Vec::new(),
        watches: vec![Vec::new(); 2 * n],
        value: vec![UNSET; n],
        trail: Vec::new(),
        qhead: 0,
        levels: Vec::new(),
    };
    let mut units = Vec::new();
    for clause in cnf.clauses {
        match clause.len() {
            0 => return SatResult::Unsat,
            1 => units.push(clause[0]),
            _ => {
                let ci = solver.clauses.len();
                solver.watches[clause[0].code()].push(ci);
                solver.watches[clause[1].code()].push(ci);
                solver.clauses.push(clause);
            }
        }
    }
    for u in units {
        match solver.lit_value(u) {
            1 => {}
            -1 => return SatResult::Unsat,
            _ => solver.assign(u),
        }
    }

    let mut next_var = 0usize;
    let mut steps = 0u64;
    loop {
        steps += 1;
        if steps.is_multiple_of(1024) && deadline.is_some_and(|d| Instant::now() >= d) {
            return SatResult::Timeout;
        }
        if !solver.propagate() {
            // Undo decisions until one can be flipped.
            loop {
                let Some((len, flipped)) = solver.levels.pop() else {
                    return SatResult::Unsat;
                };
                let decision = solver.trail[len];
                solver.backtrack_to(len);
                if !flipped {
                    solver.levels.push((len, true));
                    solver.assign(decision.negate());
                    break;
                }
            }
            next_var = 0;
            continue;
        }
        while next_var < n && solver.value[next_var] != UNSET {
            next_var += 1;
        }
        if next_var == n {
            return SatResult::Sat(solver.value.iter().map(|&v| v == 1).collect());
        }
        solver.levels.push((solver.trail.len(), false));
        solver.assign(Lit::neg(next_var as u32));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn brute_force(n: u32, clauses: &[Vec<Lit>]) -> bool {
        (0..1u32 << n).any(|bits| {
            clauses.iter().all(|c| c.iter().any(|l| ((bits >> l.var()) & 1 == 1) != l.is_neg()))
        })
    }

    #[test]
    fn agrees_with_brute_force_on_random_instances() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.random_range(1..=8u32);
            let m = rng.random_range(0..=30usize);
            let mut cnf = Cnf::new();
            for _ in 0..n {
                cnf.fresh_var();
            }
            let mut clauses = Vec::new();
            for _ in 0..m {
                let len = rng.random_range(1..=3usize);
                let c: Vec<Lit> = (0..len)
                    .map(|_| {
                        let v = rng.random_range(0..n);
                        if rng.random_bool(0.5) {
                            Lit::pos(v)
                        } else {
                            Lit::neg(v)
                        }
                    })
                    .collect();
                clauses.push(c.clone());
                cnf.add_clause(c);
            }
            let expected = brute_force(n, &clauses);
            match solve(cnf, None) {
                SatResult::Sat(model) => {
                    assert!(expected);
                    for c in &clauses {
                        assert!(c.iter().any(|l| model[l.var() as usize] != l.is_neg()));
                    }
                }
                SatResult::Unsat => assert!(!expected),
                SatResult::Timeout => unreachable!(),
            }
        }
    }

    #[test]
    fn empty_clause_is_unsat() {
        let mut cnf = Cnf::new();
        cnf.add_clause(vec![]);
        assert_eq!(solve(cnf, None), SatResult::Unsat);
    }
}
