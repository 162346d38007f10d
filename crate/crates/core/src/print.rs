//! Plain-text rendering of syntax.
//!
//! The default output uses the same ASCII surface syntax the parser accepts
//! (`top bot & | => ~ exists forall = |-`), so printing and parsing round
//! trip. A unicode style is available for display purposes.
//!
//! Parenthesisation preserves tree shape: left-associated chains print
//! without parentheses, anything else keeps them.

use crate::syntax::{Context, Formula, Sequent, Term};

/// Output style for the printers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrintStyle {
    pub unicode: bool,
}

impl PrintStyle {
    pub const ASCII: PrintStyle = PrintStyle { unicode: false };
    pub const UNICODE: PrintStyle = PrintStyle { unicode: true };

    fn and(&self) -> &'static str {
        if self.unicode {
            "\u{2227}"
        } else {
            "&"
        }
    }

    fn or(&self) -> &'static str {
        if self.unicode {
            "\u{2228}"
        } else {
            "|"
        }
    }

    fn implies(&self) -> &'static str {
        if self.unicode {
            "\u{21d2}"
        } else {
            "=>"
        }
    }

    fn not(&self) -> &'static str {
        if self.unicode {
            "\u{00ac}"
        } else {
            "~"
        }
    }

    fn top(&self) -> &'static str {
        if self.unicode {
            "\u{22a4}"
        } else {
            "top"
        }
    }

    fn bot(&self) -> &'static str {
        if self.unicode {
            "\u{22a5}"
        } else {
            "bot"
        }
    }

    fn exists(&self) -> &'static str {
        if self.unicode {
            "\u{2203}"
        } else {
            "exists "
        }
    }

    fn forall(&self) -> &'static str {
        if self.unicode {
            "\u{2200}"
        } else {
            "forall "
        }
    }

    fn turnstile(&self) -> &'static str {
        if self.unicode {
            "\u{22a2}"
        } else {
            "|-"
        }
    }
}

pub fn term_to_string(t: &Term) -> String {
    let mut out = String::new();
    write_term(&mut out, t);
    out
}

fn write_term(out: &mut String, t: &Term) {
    match t {
        Term::Var(v) => out.push_str(v.name()),
        Term::App(f, args) => {
            out.push_str(f);
            if !args.is_empty() {
                out.push('(');
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_term(out, arg);
                }
                out.push(')');
            }
        }
    }
}

// Precedence levels: quantifiers bind loosest (their body extends
// maximally), then => (right associative), |, &, ~, atoms.
const PREC_QUANT: u8 = 0;
const PREC_IMPLIES: u8 = 1;
const PREC_OR: u8 = 2;
const PREC_AND: u8 = 3;
const PREC_EQ: u8 = 4;
const PREC_NOT: u8 = 5;
const PREC_ATOM: u8 = 6;

fn prec(f: &Formula) -> u8 {
    match f {
        Formula::Exists(..) | Formula::Forall(..) => PREC_QUANT,
        Formula::Implies(..) => PREC_IMPLIES,
        Formula::Or(..) => PREC_OR,
        Formula::And(..) => PREC_AND,
        Formula::Eq(..) => PREC_EQ,
        Formula::Not(..) => PREC_NOT,
        Formula::Rel(..) | Formula::Top | Formula::Bot => PREC_ATOM,
    }
}

pub fn formula_to_string(f: &Formula) -> String {
    formula_to_string_styled(f, PrintStyle::ASCII)
}

pub fn formula_to_string_styled(f: &Formula, style: PrintStyle) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, 0, style);
    out
}

fn write_formula(out: &mut String, f: &Formula, min: u8, style: PrintStyle) {
    let parens = prec(f) < min;
    if parens {
        out.push('(');
    }
    match f {
        Formula::Rel(r, args) => {
            out.push_str(r);
            if !args.is_empty() {
                out.push('(');
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_term(out, arg);
                }
                out.push(')');
            }
        }
        Formula::Eq(s, t) => {
            write_term(out, s);
            out.push_str(" = ");
            write_term(out, t);
        }
        Formula::Top => out.push_str(style.top()),
        Formula::Bot => out.push_str(style.bot()),
        Formula::And(a, b) => {
            write_formula(out, a, PREC_AND, style);
            out.push(' ');
            out.push_str(style.and());
            out.push(' ');
            write_formula(out, b, PREC_AND + 1, style);
        }
        Formula::Or(a, b) => {
            write_formula(out, a, PREC_OR, style);
            out.push(' ');
            out.push_str(style.or());
            out.push(' ');
            write_formula(out, b, PREC_OR + 1, style);
        }
        Formula::Implies(a, b) => {
            write_formula(out, a, PREC_IMPLIES + 1, style);
            out.push(' ');
            out.push_str(style.implies());
            out.push(' ');
            write_formula(out, b, PREC_IMPLIES, style);
        }
        Formula::Not(a) => {
            out.push_str(style.not());
            write_formula(out, a, PREC_NOT, style);
        }
        Formula::Exists(v, body) => {
            out.push_str(style.exists());
            out.push_str(v.name());
            out.push(':');
            out.push_str(v.sort().as_str());
            out.push_str(". ");
            write_formula(out, body, PREC_QUANT, style);
        }
        Formula::Forall(v, body) => {
            out.push_str(style.forall());
            out.push_str(v.name());
            out.push(':');
            out.push_str(v.sort().as_str());
            out.push_str(". ");
            write_formula(out, body, PREC_QUANT, style);
        }
    }
    if parens {
        out.push(')');
    }
}

pub fn context_to_string(c: &Context) -> String {
    let mut out = String::from("[");
    for (i, v) in c.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(v.name());
        out.push(':');
        out.push_str(v.sort().as_str());
    }
    out.push(']');
    out
}

/// Axiom-style rendering: `[ctx] lhs |- rhs`.
pub fn sequent_to_string(s: &Sequent) -> String {
    sequent_to_string_styled(s, PrintStyle::ASCII)
}

pub fn sequent_to_string_styled(s: &Sequent, style: PrintStyle) -> String {
    format!(
        "{} {} {} {}",
        context_to_string(s.ctx()),
        formula_to_string_styled(s.lhs(), style),
        style.turnstile(),
        formula_to_string_styled(s.rhs(), style),
    )
}

/// Proof-line rendering: `lhs [ctx] |- rhs`.
pub fn sequent_to_proof_line(s: &Sequent, style: PrintStyle) -> String {
    format!(
        "{} {} {} {}",
        formula_to_string_styled(s.lhs(), style),
        context_to_string(s.ctx()),
        style.turnstile(),
        formula_to_string_styled(s.rhs(), style),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::Variable;

    fn v(n: &str) -> Variable {
        Variable::new(n, "A")
    }

    #[test]
    fn left_assoc_chains_print_flat() {
        let f = Formula::and(
            Formula::and(Formula::prop("A"), Formula::prop("B")),
            Formula::prop("C"),
        );
        assert_eq!(formula_to_string(&f), "A & B & C");
        let g = Formula::and(
            Formula::prop("A"),
            Formula::and(Formula::prop("B"), Formula::prop("C")),
        );
        assert_eq!(formula_to_string(&g), "A & (B & C)");
    }

    #[test]
    fn implies_is_right_associative() {
        let f = Formula::implies(
            Formula::prop("A"),
            Formula::implies(Formula::prop("B"), Formula::prop("C")),
        );
        assert_eq!(formula_to_string(&f), "A => B => C");
        let g = Formula::implies(
            Formula::implies(Formula::prop("A"), Formula::prop("B")),
            Formula::prop("C"),
        );
        assert_eq!(formula_to_string(&g), "(A => B) => C");
    }

    #[test]
    fn precedence_mixes() {
        let f = Formula::or(
            Formula::and(Formula::prop("A"), Formula::prop("B")),
            Formula::prop("C"),
        );
        assert_eq!(formula_to_string(&f), "A & B | C");
        let g = Formula::and(
            Formula::prop("A"),
            Formula::or(Formula::prop("B"), Formula::prop("C")),
        );
        assert_eq!(formula_to_string(&g), "A & (B | C)");
        let n = Formula::not(Formula::and(Formula::prop("A"), Formula::prop("B")));
        assert_eq!(formula_to_string(&n), "~(A & B)");
        let nn = Formula::not(Formula::not(Formula::prop("A")));
        assert_eq!(formula_to_string(&nn), "~~A");
    }

    #[test]
    fn quantifier_body_prints_maximally() {
        let f = Formula::exists(
            v("x"),
            Formula::and(
                Formula::rel("R", vec![Term::var(v("x"))]),
                Formula::prop("P"),
            ),
        );
        assert_eq!(formula_to_string(&f), "exists x:A. R(x) & P");
        let g = Formula::and(Formula::prop("P"), Formula::exists(v("x"), Formula::Top));
        assert_eq!(formula_to_string(&g), "P & (exists x:A. top)");
    }

    #[test]
    fn equations_print_inside_connectives() {
        let f = Formula::and(
            Formula::eq(Term::var(v("x")), Term::var(v("y"))),
            Formula::eq(Term::var(v("y")), Term::var(v("x"))),
        );
        assert_eq!(formula_to_string(&f), "x = y & y = x");
        let n = Formula::not(Formula::eq(Term::var(v("x")), Term::var(v("y"))));
        assert_eq!(formula_to_string(&n), "~(x = y)");
    }

    #[test]
    fn unicode_style() {
        let f = Formula::implies(
            Formula::and(Formula::prop("A"), Formula::Top),
            Formula::not(Formula::Bot),
        );
        assert_eq!(
            formula_to_string_styled(&f, PrintStyle::UNICODE),
            "A \u{2227} \u{22a4} \u{21d2} \u{00ac}\u{22a5}"
        );
    }
}
