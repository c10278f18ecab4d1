use super::Formula;

/// Symbol spelling for prover inner syntax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolStyle {
    /// `\<forall>`, `\<and>`, `\<longrightarrow>`, ...
    Escaped,
    /// `∀`, `∧`, `⟶`, ...
    Unicode,
}

struct Dialect {
    forall: &'static str,
    exists: &'static str,
    and: &'static str,
    or: &'static str,
    implies: &'static str,
    not: &'static str,
    juxtapose: bool,
}

const CANONICAL: Dialect = Dialect {
    forall: "∀",
    exists: "∃",
    and: " ∧ ",
    or: " ∨ ",
    implies: " → ",
    not: "¬",
    juxtapose: false,
};

const PROVER_ESCAPED: Dialect = Dialect {
    forall: "\\<forall>",
    exists: "\\<exists>",
    and: " \\<and> ",
    or: " \\<or> ",
    implies: " \\<longrightarrow> ",
    not: "\\<not>",
    juxtapose: true,
};

const PROVER_UNICODE: Dialect = Dialect {
    forall: "∀",
    exists: "∃",
    and: " ∧ ",
    or: " ∨ ",
    implies: " ⟶ ",
    not: "¬",
    juxtapose: true,
};

/// Canonical text, e.g. `∀x. Violin(x) → Instrument(x)`.
pub fn render_formula(f: &Formula) -> String {
    let mut out = String::new();
    write(&CANONICAL, f, &mut out);
    out
}

/// Prover inner syntax, e.g. `\<forall>x. Violin x \<longrightarrow> Instrument x`.
pub fn render_prover(f: &Formula, style: SymbolStyle) -> String {
    let dialect = match style {
        SymbolStyle::Escaped => &PROVER_ESCAPED,
        SymbolStyle::Unicode => &PROVER_UNICODE,
    };
    let mut out = String::new();
    write(dialect, f, &mut out);
    out
}

// Binding strength. Quantifiers extend as far right as possible, so as an
// operand they are always parenthesised.
const QUANT: u8 = 0;
const IMPLIES: u8 = 1;
const OR: u8 = 2;
const AND: u8 = 3;
const NOT: u8 = 4;
const ATOM: u8 = 5;

fn level(f: &Formula) -> u8 {
    match f {
        Formula::Atom { .. } => ATOM,
        Formula::Not(_) => NOT,
        Formula::And(..) => AND,
        Formula::Or(..) => OR,
        Formula::Implies(..) => IMPLIES,
        Formula::Forall { .. } | Formula::Exists { .. } => QUANT,
    }
}

fn operand(d: &Dialect, f: &Formula, min: u8, out: &mut String) {
    if level(f) < min {
        out.push('(');
        write(d, f, out);
        out.push(')');
    } else {
        write(d, f, out);
    }
}

fn write(d: &Dialect, f: &Formula, out: &mut String) {
    match f {
        Formula::Atom { pred, args } => {
            out.push_str(pred);
            if d.juxtapose {
                for a in args {
                    out.push(' ');
                    out.push_str(a.name());
                }
            } else {
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(a.name());
                }
                out.push(')');
            }
        }
        Formula::Not(g) => {
            out.push_str(d.not);
            operand(d, g, NOT, out);
        }
        Formula::And(l, r) => binary(d, l, r, d.and, AND, out),
        Formula::Or(l, r) => binary(d, l, r, d.or, OR, out),
        Formula::Implies(l, r) => binary(d, l, r, d.implies, IMPLIES, out),
        Formula::Forall { vars, body } | Formula::Exists { vars, body } => {
            out.push_str(if matches!(f, Formula::Forall { .. }) { d.forall } else { d.exists });
            for (i, v) in vars.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(v.name());
            }
            out.push_str(". ");
            write(d, body, out);
        }
    }
}

// Right-associative: the left operand must bind strictly tighter.
fn binary(d: &Dialect, l: &Formula, r: &Formula, op: &str, lvl: u8, out: &mut String) {
    operand(d, l, lvl + 1, out);
    out.push_str(op);
    operand(d, r, lvl, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_formula, parse_prover_formula};

    #[test]
    fn single_atom() {
        assert_eq!(render_formula(&Formula::atom("Agent", &["e", "x"])), "Agent(e, x)");
    }

    #[test]
    fn wolf_sheep_rendering() {
        let text = "∀x y e1. wolf(x) ∧ sheep(y) ∧ eating(e1) ∧ agent(e1, x) ∧ patient(e1, y) → \
                    (∃e2. predator(x) ∧ prey(y) ∧ hunting(e2) ∧ agent(e2, x) ∧ patient(e2, y) ∧ example(e1, e2))";
        let f = parse_formula(text).unwrap();
        assert_eq!(render_formula(&f), text);
        assert!(render_formula(&f).contains("hunting(e2) ∧ agent(e2, x)"));
    }

    #[test]
    fn left_nested_binary_gets_parentheses() {
        let f = Formula::and(
            Formula::and(Formula::atom("A", &["x"]), Formula::atom("B", &["x"])),
            Formula::atom("C", &["x"]),
        );
        assert_eq!(render_formula(&f), "(A(x) ∧ B(x)) ∧ C(x)");
        assert_eq!(parse_formula(&render_formula(&f)).unwrap(), f);

        let g = Formula::implies(
            Formula::implies(Formula::atom("A", &["x"]), Formula::atom("B", &["x"])),
            Formula::atom("C", &["x"]),
        );
        assert_eq!(render_formula(&g), "(A(x) → B(x)) → C(x)");
    }

    #[test]
    fn negated_quantifier_and_compound() {
        let f = Formula::not(Formula::exists(&["x"], Formula::atom("P", &["x"])));
        assert_eq!(render_formula(&f), "¬(∃x. P(x))");
        let g = Formula::not(Formula::and(Formula::atom("P", &["x"]), Formula::atom("Q", &["x"])));
        assert_eq!(render_formula(&g), "¬(P(x) ∧ Q(x))");
        assert_eq!(parse_formula(&render_formula(&g)).unwrap(), g);
    }

    #[test]
    fn prover_rendering_escaped_and_unicode() {
        let f = parse_formula("∀x. Violin(x) → Instrument(x)").unwrap();
        assert_eq!(
            render_prover(&f, SymbolStyle::Escaped),
            "\\<forall>x. Violin x \\<longrightarrow> Instrument x"
        );
        assert_eq!(render_prover(&f, SymbolStyle::Unicode), "∀x. Violin x ⟶ Instrument x");
        let back = parse_prover_formula(&render_prover(&f, SymbolStyle::Escaped)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rendering_is_deterministic() {
        let f = parse_formula("∃x y e. Woman(x) ∧ Instrument(y) ∧ Playing(e) ∧ Agent(e, x)").unwrap();
        assert_eq!(render_formula(&f), render_formula(&f.clone()));
    }
}
