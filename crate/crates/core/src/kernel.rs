//! Rule-by-rule checker for sequent derivations.
//!
//! A derivation is a numbered list of lines, each carrying a sequent, the
//! rule that justifies it, and references to earlier lines for the rule's
//! premises. Checking is schema-exact: formulae are compared syntactically
//! and contexts by order, with AlphaRename as an explicit step for bound
//! variable renaming. The two exceptions are Sub and Eq1, whose computed
//! sides are compared up to alpha-equivalence because recomputing a
//! substitution renames binders.
//!
//! Rules carry the weakest fragment that admits them; a derivation
//! declares a fragment and may only use rules at or below it.

use thiserror::Error;

use crate::subst::{apply_formula, Substitution};
use crate::syntax::{alpha_equivalent, Context, Formula, Fragment, Sequent, Theory, Variable};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    Id,
    Cut,
    Sub(Substitution, Context),
    Eq0,
    Eq1,
    Top,
    Bot,
    AndE0,
    AndE1,
    AndI,
    OrI0,
    OrI1,
    OrRule,
    ImpliesDown,
    ImpliesUp,
    Distributive,
    ExistsDown,
    ExistsUp,
    ForallDown,
    ForallUp,
    Em,
    Frobenius,
    AlphaRename,
    NegDef,
    Hypothesis(usize),
    TheoremRef(String),
}

impl Rule {
    /// The weakest fragment whose calculus contains this rule.
    pub fn fragment(&self) -> Fragment {
        match self {
            Rule::Id
            | Rule::Cut
            | Rule::Sub(..)
            | Rule::Eq0
            | Rule::AlphaRename
            | Rule::Hypothesis(_)
            | Rule::TheoremRef(_) => Fragment::Atomic,
            Rule::Eq1 | Rule::Top | Rule::AndE0 | Rule::AndE1 | Rule::AndI => Fragment::Horn,
            Rule::ExistsDown | Rule::ExistsUp | Rule::Frobenius => Fragment::Regular,
            Rule::Bot | Rule::OrI0 | Rule::OrI1 | Rule::OrRule | Rule::Distributive => {
                Fragment::Coherent
            }
            Rule::ImpliesDown | Rule::ImpliesUp | Rule::ForallDown | Rule::ForallUp
            | Rule::NegDef => Fragment::Intuitionistic,
            Rule::Em => Fragment::Classical,
        }
    }

    /// Number of premise lines the rule consumes, when fixed.
    pub fn premise_count(&self) -> Option<usize> {
        match self {
            Rule::Id
            | Rule::Eq0
            | Rule::Eq1
            | Rule::Top
            | Rule::Bot
            | Rule::AndE0
            | Rule::AndE1
            | Rule::OrI0
            | Rule::OrI1
            | Rule::Distributive
            | Rule::Em
            | Rule::Frobenius
            | Rule::Hypothesis(_) => Some(0),
            Rule::Sub(..)
            | Rule::ImpliesDown
            | Rule::ImpliesUp
            | Rule::ExistsDown
            | Rule::ExistsUp
            | Rule::ForallDown
            | Rule::ForallUp
            | Rule::AlphaRename
            | Rule::NegDef => Some(1),
            Rule::Cut | Rule::AndI | Rule::OrRule => Some(2),
            Rule::TheoremRef(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Id => "id",
            Rule::Cut => "cut",
            Rule::Sub(..) => "sub",
            Rule::Eq0 => "eq0",
            Rule::Eq1 => "eq1",
            Rule::Top => "top",
            Rule::Bot => "bot",
            Rule::AndE0 => "andE0",
            Rule::AndE1 => "andE1",
            Rule::AndI => "andI",
            Rule::OrI0 => "orI0",
            Rule::OrI1 => "orI1",
            Rule::OrRule => "or",
            Rule::ImpliesDown => "impliesDown",
            Rule::ImpliesUp => "impliesUp",
            Rule::Distributive => "dist",
            Rule::ExistsDown => "existsDown",
            Rule::ExistsUp => "existsUp",
            Rule::ForallDown => "forallDown",
            Rule::ForallUp => "forallUp",
            Rule::Em => "em",
            Rule::Frobenius => "frobenius",
            Rule::AlphaRename => "alpha",
            Rule::NegDef => "negdef",
            Rule::Hypothesis(_) => "hyp",
            Rule::TheoremRef(_) => "thm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepErrorKind {
    ContextMismatch,
    SchemaMismatch,
    SideConditionViolated,
    FragmentViolation,
    BadReference,
    UnknownCorpusEntry,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("line {line}: {kind:?}: {detail}")]
pub struct StepError {
    pub line: usize,
    pub kind: StepErrorKind,
    pub detail: String,
}

impl StepError {
    pub(crate) fn new(kind: StepErrorKind, detail: impl Into<String>) -> StepError {
        StepError {
            line: 0,
            kind,
            detail: detail.into(),
        }
    }

    pub(crate) fn at(mut self, line: usize) -> StepError {
        self.line = line;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationLine {
    pub sequent: Sequent,
    pub rule: Rule,
    /// 1-based references to earlier lines.
    pub premises: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub declared: Fragment,
    pub lines: Vec<DerivationLine>,
}

impl Derivation {
    pub fn new(declared: Fragment) -> Derivation {
        Derivation {
            declared,
            lines: Vec::new(),
        }
    }

    pub fn push(&mut self, sequent: Sequent, rule: Rule, premises: Vec<usize>) {
        self.lines.push(DerivationLine {
            sequent,
            rule,
            premises,
        });
    }

    /// The sequent established by the last line.
    pub fn conclusion(&self) -> Option<&Sequent> {
        self.lines.last().map(|l| &l.sequent)
    }
}

fn schema(detail: impl Into<String>) -> StepError {
    StepError::new(StepErrorKind::SchemaMismatch, detail)
}

fn ctx_err(detail: impl Into<String>) -> StepError {
    StepError::new(StepErrorKind::ContextMismatch, detail)
}

fn side(detail: impl Into<String>) -> StepError {
    StepError::new(StepErrorKind::SideConditionViolated, detail)
}

fn same_context(premise: &Sequent, conclusion: &Sequent) -> Result<(), StepError> {
    if premise.ctx() != conclusion.ctx() {
        return Err(ctx_err(format!(
            "premise context {} differs from conclusion context {}",
            premise.ctx(),
            conclusion.ctx()
        )));
    }
    Ok(())
}

// Premise context must be the conclusion context with `extra` appended.
fn extended_context(
    shorter: &Context,
    longer: &Context,
    extra: &Variable,
) -> Result<(), StepError> {
    let want: Vec<&Variable> = shorter.iter().chain(std::iter::once(extra)).collect();
    let have: Vec<&Variable> = longer.iter().collect();
    if want != have {
        return Err(ctx_err(format!(
            "context {longer} must extend {shorter} by exactly {extra}"
        )));
    }
    Ok(())
}

/// Rewrites every negation into an implication of bottom, recursively.
pub fn eliminate_negation(phi: &Formula) -> Formula {
    match phi {
        Formula::Not(a) => Formula::implies(eliminate_negation(a), Formula::Bot),
        Formula::And(a, b) => Formula::and(eliminate_negation(a), eliminate_negation(b)),
        Formula::Or(a, b) => Formula::or(eliminate_negation(a), eliminate_negation(b)),
        Formula::Implies(a, b) => Formula::implies(eliminate_negation(a), eliminate_negation(b)),
        Formula::Exists(v, a) => Formula::exists(v.clone(), eliminate_negation(a)),
        Formula::Forall(v, a) => Formula::forall(v.clone(), eliminate_negation(a)),
        atom => atom.clone(),
    }
}

/// Checks a single inference step against its rule schema. Hypothesis and
/// theorem references need surrounding derivation state and are rejected
/// here; `check_derivation` handles them.
pub fn check_step(
    rule: &Rule,
    premises: &[&Sequent],
    conclusion: &Sequent,
) -> Result<(), StepError> {
    if let Some(want) = rule.premise_count() {
        if premises.len() != want {
            return Err(schema(format!(
                "{} expects {} premise(s), got {}",
                rule.name(),
                want,
                premises.len()
            )));
        }
    }
    match rule {
        Rule::Id => {
            if conclusion.lhs() != conclusion.rhs() {
                return Err(schema("identity requires equal sides"));
            }
            Ok(())
        }
        Rule::Cut => {
            let (p1, p2) = (premises[0], premises[1]);
            same_context(p1, conclusion)?;
            same_context(p2, conclusion)?;
            if p1.rhs() != p2.lhs() {
                return Err(schema(format!(
                    "cut formula mismatch: {} vs {}",
                    p1.rhs(),
                    p2.lhs()
                )));
            }
            if conclusion.lhs() != p1.lhs() || conclusion.rhs() != p2.rhs() {
                return Err(schema("cut conclusion must join outer sides"));
            }
            Ok(())
        }
        Rule::Sub(theta, new_ctx) => {
            let p = premises[0];
            if conclusion.ctx() != new_ctx {
                return Err(ctx_err(format!(
                    "conclusion context {} is not the supplied {}",
                    conclusion.ctx(),
                    new_ctx
                )));
            }
            let want_l = apply_formula(p.lhs(), theta);
            let want_r = apply_formula(p.rhs(), theta);
            if !alpha_equivalent(conclusion.lhs(), &want_l)
                || !alpha_equivalent(conclusion.rhs(), &want_r)
            {
                return Err(schema(format!(
                    "substituted sequent is {} {} |- {}",
                    want_l,
                    conclusion.ctx(),
                    want_r
                )));
            }
            Ok(())
        }
        Rule::Eq0 => {
            if conclusion.ctx().len() != 1 {
                return Err(ctx_err("reflexivity context is a single variable"));
            }
            let x = &conclusion.ctx().vars()[0];
            if conclusion.lhs() != &Formula::Top {
                return Err(schema("reflexivity left side is top"));
            }
            let want = Formula::eq(crate::syntax::Term::var(x.clone()), crate::syntax::Term::var(x.clone()));
            if conclusion.rhs() != &want {
                return Err(schema(format!("reflexivity concludes {want}")));
            }
            Ok(())
        }
        Rule::Eq1 => {
            let (eqs, phi) = match conclusion.lhs() {
                Formula::And(a, b) => (a, b),
                _ => return Err(schema("left side must conjoin equations with a formula")),
            };
            let mut pairs = Vec::new();
            for part in crate::normal::flatten_conjunction(eqs) {
                match part {
                    Formula::Eq(crate::syntax::Term::Var(x), crate::syntax::Term::Var(y)) => {
                        pairs.push((crate::syntax::Term::var(y), x));
                    }
                    other => {
                        return Err(schema(format!(
                            "expected an equation between variables, found {other}"
                        )))
                    }
                }
            }
            let theta = Substitution::new(pairs)
                .map_err(|e| schema(format!("equations do not form a substitution: {e}")))?;
            let want = apply_formula(phi, &theta);
            if !alpha_equivalent(conclusion.rhs(), &want) {
                return Err(schema(format!("substituted right side is {want}")));
            }
            Ok(())
        }
        Rule::Top => {
            if conclusion.rhs() != &Formula::Top {
                return Err(schema("right side must be top"));
            }
            Ok(())
        }
        Rule::Bot => {
            if conclusion.lhs() != &Formula::Bot {
                return Err(schema("left side must be bottom"));
            }
            Ok(())
        }
        Rule::AndE0 | Rule::AndE1 => {
            let (a, b) = match conclusion.lhs() {
                Formula::And(a, b) => (a, b),
                _ => return Err(schema("left side must be a conjunction")),
            };
            let want: &Formula = if matches!(rule, Rule::AndE0) { a } else { b };
            if conclusion.rhs() != want {
                return Err(schema(format!("projection concludes {want}")));
            }
            Ok(())
        }
        Rule::AndI => {
            let (p1, p2) = (premises[0], premises[1]);
            same_context(p1, conclusion)?;
            same_context(p2, conclusion)?;
            if p1.lhs() != p2.lhs() || p1.lhs() != conclusion.lhs() {
                return Err(schema("conjunction premises share the left side"));
            }
            let want = Formula::and(p1.rhs().clone(), p2.rhs().clone());
            if conclusion.rhs() != &want {
                return Err(schema(format!(
                    "first premise gives the left conjunct: expected {want}"
                )));
            }
            Ok(())
        }
        Rule::OrI0 | Rule::OrI1 => {
            let (a, b) = match conclusion.rhs() {
                Formula::Or(a, b) => (a, b),
                _ => return Err(schema("right side must be a disjunction")),
            };
            let want: &Formula = if matches!(rule, Rule::OrI0) { a } else { b };
            if conclusion.lhs() != want {
                return Err(schema(format!("injection starts from {want}")));
            }
            Ok(())
        }
        Rule::OrRule => {
            let (p1, p2) = (premises[0], premises[1]);
            same_context(p1, conclusion)?;
            same_context(p2, conclusion)?;
            if p1.rhs() != p2.rhs() || p1.rhs() != conclusion.rhs() {
                return Err(schema("disjunction premises share the right side"));
            }
            let want = Formula::or(p1.lhs().clone(), p2.lhs().clone());
            if conclusion.lhs() != &want {
                return Err(schema(format!(
                    "first premise gives the left disjunct: expected {want}"
                )));
            }
            Ok(())
        }
        Rule::ImpliesDown => {
            let p = premises[0];
            same_context(p, conclusion)?;
            let (phi, chi) = match p.rhs() {
                Formula::Implies(a, b) => (a, b),
                _ => return Err(schema("premise right side must be an implication")),
            };
            let want_lhs = Formula::and((**phi).clone(), p.lhs().clone());
            if conclusion.lhs() != &want_lhs || conclusion.rhs() != &**chi {
                return Err(schema(format!("expected {want_lhs} |- {chi}")));
            }
            Ok(())
        }
        Rule::ImpliesUp => {
            let p = premises[0];
            same_context(p, conclusion)?;
            let (phi, psi) = match p.lhs() {
                Formula::And(a, b) => (a, b),
                _ => return Err(schema("premise left side must be a conjunction")),
            };
            if conclusion.lhs() != &**psi {
                return Err(schema("conclusion keeps the right conjunct on the left"));
            }
            let want = Formula::implies((**phi).clone(), p.rhs().clone());
            if conclusion.rhs() != &want {
                return Err(schema(format!("conclusion right side must be {want}")));
            }
            Ok(())
        }
        Rule::Distributive => {
            let (phi, psi, chi) = match conclusion.lhs() {
                Formula::And(phi, rest) => match &**rest {
                    Formula::Or(psi, chi) => (phi, psi, chi),
                    _ => return Err(schema("left side must be phi & (psi | chi)")),
                },
                _ => return Err(schema("left side must be phi & (psi | chi)")),
            };
            let want = Formula::or(
                Formula::and((**phi).clone(), (**psi).clone()),
                Formula::and((**phi).clone(), (**chi).clone()),
            );
            if conclusion.rhs() != &want {
                return Err(schema(format!("right side must be {want}")));
            }
            Ok(())
        }
        Rule::ExistsDown => {
            let p = premises[0];
            let (y, phi) = match conclusion.lhs() {
                Formula::Exists(y, phi) => (y, phi),
                _ => return Err(schema("conclusion left side must be existential")),
            };
            extended_context(conclusion.ctx(), p.ctx(), y)?;
            if p.lhs() != &**phi || p.rhs() != conclusion.rhs() {
                return Err(schema("existential body and right side must carry over"));
            }
            Ok(())
        }
        Rule::ExistsUp => {
            let p = premises[0];
            let (y, phi) = match p.lhs() {
                Formula::Exists(y, phi) => (y, phi),
                _ => return Err(schema("premise left side must be existential")),
            };
            extended_context(p.ctx(), conclusion.ctx(), y)?;
            if conclusion.lhs() != &**phi || conclusion.rhs() != p.rhs() {
                return Err(schema("existential body and right side must carry over"));
            }
            Ok(())
        }
        Rule::ForallDown => {
            let p = premises[0];
            let (y, psi) = match conclusion.rhs() {
                Formula::Forall(y, psi) => (y, psi),
                _ => return Err(schema("conclusion right side must be universal")),
            };
            extended_context(conclusion.ctx(), p.ctx(), y)?;
            if p.rhs() != &**psi || p.lhs() != conclusion.lhs() {
                return Err(schema("universal body and left side must carry over"));
            }
            Ok(())
        }
        Rule::ForallUp => {
            let p = premises[0];
            let (y, psi) = match p.rhs() {
                Formula::Forall(y, psi) => (y, psi),
                _ => return Err(schema("premise right side must be universal")),
            };
            extended_context(p.ctx(), conclusion.ctx(), y)?;
            if conclusion.rhs() != &**psi || conclusion.lhs() != p.lhs() {
                return Err(schema("universal body and left side must carry over"));
            }
            Ok(())
        }
        Rule::Em => {
            if conclusion.lhs() != &Formula::Top {
                return Err(schema("left side must be top"));
            }
            match conclusion.rhs() {
                Formula::Or(a, b) if matches!(&**b, Formula::Not(inner) if inner == a) => Ok(()),
                _ => Err(schema("right side must be phi | ~phi")),
            }
        }
        Rule::Frobenius => {
            let (phi, y, psi) = match conclusion.lhs() {
                Formula::And(phi, rest) => match &**rest {
                    Formula::Exists(y, psi) => (phi, y, psi),
                    _ => return Err(schema("left side must be phi & (exists y) psi")),
                },
                _ => return Err(schema("left side must be phi & (exists y) psi")),
            };
            let want = Formula::exists(y.clone(), Formula::and((**phi).clone(), (**psi).clone()));
            if conclusion.rhs() != &want {
                return Err(schema(format!("right side must be {want}")));
            }
            if phi.free_variables().contains(y) {
                return Err(side(format!("{y} must not be free in {phi}")));
            }
            if conclusion.ctx().contains(y) {
                return Err(side(format!("{y} must not occur in the context")));
            }
            Ok(())
        }
        Rule::AlphaRename => {
            let p = premises[0];
            same_context(p, conclusion)?;
            if !alpha_equivalent(p.lhs(), conclusion.lhs())
                || !alpha_equivalent(p.rhs(), conclusion.rhs())
            {
                return Err(schema("sides must be alpha-equivalent to the premise"));
            }
            Ok(())
        }
        Rule::NegDef => {
            let p = premises[0];
            same_context(p, conclusion)?;
            let ok = alpha_equivalent(
                &eliminate_negation(p.lhs()),
                &eliminate_negation(conclusion.lhs()),
            ) && alpha_equivalent(
                &eliminate_negation(p.rhs()),
                &eliminate_negation(conclusion.rhs()),
            );
            if !ok {
                return Err(schema(
                    "sides must agree after rewriting ~phi as phi => bot",
                ));
            }
            Ok(())
        }
        Rule::Hypothesis(_) => Err(schema("hypothesis steps need a theory; check the derivation")),
        Rule::TheoremRef(name) => Err(schema(format!(
            "theorem reference '{name}' must be expanded before checking"
        ))),
    }
}

/// Checks every line of a derivation against the theory's axioms. Theorem
/// references must have been expanded away first. Returns all errors.
pub fn check_derivation(d: &Derivation, theory: &Theory) -> Result<(), Vec<StepError>> {
    let mut errors = Vec::new();
    for (idx, line) in d.lines.iter().enumerate() {
        let n = idx + 1;
        let frag = line.rule.fragment();
        if frag > d.declared {
            errors.push(
                StepError::new(
                    StepErrorKind::FragmentViolation,
                    format!("rule {} needs {}, derivation declares {}", line.rule.name(), frag, d.declared),
                )
                .at(n),
            );
            continue;
        }
        let mut refs_ok = true;
        for &p in &line.premises {
            if p == 0 || p >= n {
                errors.push(
                    StepError::new(
                        StepErrorKind::BadReference,
                        format!("premise {p} must reference an earlier line"),
                    )
                    .at(n),
                );
                refs_ok = false;
            }
        }
        if !refs_ok {
            continue;
        }
        match &line.rule {
            Rule::Hypothesis(k) => {
                if !line.premises.is_empty() {
                    errors.push(schema("hypothesis takes no premises").at(n));
                    continue;
                }
                match theory.axioms().get(k.wrapping_sub(1)) {
                    None => errors.push(
                        StepError::new(
                            StepErrorKind::BadReference,
                            format!("theory has no axiom {k}"),
                        )
                        .at(n),
                    ),
                    Some(ax) if ax != &line.sequent => errors.push(
                        schema(format!("axiom {k} is {ax}, line states {}", line.sequent)).at(n),
                    ),
                    Some(_) => {}
                }
            }
            rule => {
                let premise_seqs: Vec<&Sequent> = line
                    .premises
                    .iter()
                    .map(|&p| &d.lines[p - 1].sequent)
                    .collect();
                if let Err(e) = check_step(rule, &premise_seqs, &line.sequent) {
                    errors.push(e.at(n));
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{Signature, Term};

    fn v(n: &str) -> Variable {
        Variable::new(n, "A")
    }

    fn tv(n: &str) -> Term {
        Term::var(v(n))
    }

    fn ctx(names: &[&str]) -> Context {
        Context::new(names.iter().map(|n| v(n)).collect()).unwrap()
    }

    fn seq(lhs: Formula, c: Context, rhs: Formula) -> Sequent {
        Sequent::new(lhs, c, rhs).unwrap()
    }

    fn sig() -> Signature {
        let mut s = Signature::new();
        s.add_sort("A").unwrap();
        s.add_relation("R", vec!["A".into()]).unwrap();
        s.add_relation("S", vec!["A".into()]).unwrap();
        for p in ["P", "Q", "W"] {
            s.add_proposition(p).unwrap();
        }
        s
    }

    #[test]
    fn cut_schema() {
        let p1 = seq(Formula::prop("P"), Context::empty(), Formula::prop("Q"));
        let p2 = seq(Formula::prop("Q"), Context::empty(), Formula::prop("W"));
        let conc = seq(Formula::prop("P"), Context::empty(), Formula::prop("W"));
        assert!(check_step(&Rule::Cut, &[&p1, &p2], &conc).is_ok());
        let bad = seq(Formula::prop("W"), Context::empty(), Formula::prop("W"));
        let err = check_step(&Rule::Cut, &[&p1, &p2], &bad).unwrap_err();
        assert_eq!(err.kind, StepErrorKind::SchemaMismatch);
    }

    #[test]
    fn eq_rules() {
        let refl = seq(
            Formula::Top,
            ctx(&["x"]),
            Formula::eq(tv("x"), tv("x")),
        );
        assert!(check_step(&Rule::Eq0, &[], &refl).is_ok());
        let wrong_ctx = seq(
            Formula::Top,
            ctx(&["x", "y"]),
            Formula::eq(tv("x"), tv("x")),
        );
        assert_eq!(
            check_step(&Rule::Eq0, &[], &wrong_ctx).unwrap_err().kind,
            StepErrorKind::ContextMismatch
        );

        // ((x=y) & (x=z)) |- [x,y,z] (y=z)
        let lhs = Formula::and(
            Formula::eq(tv("x"), tv("y")),
            Formula::eq(tv("x"), tv("z")),
        );
        let inst = seq(lhs, ctx(&["x", "y", "z"]), Formula::eq(tv("y"), tv("z")));
        assert!(check_step(&Rule::Eq1, &[], &inst).is_ok());
    }

    #[test]
    fn and_rules() {
        let p = Formula::prop("P");
        let q = Formula::prop("Q");
        let w = Formula::prop("W");
        let p1 = seq(p.clone(), Context::empty(), q.clone());
        let p2 = seq(p.clone(), Context::empty(), w.clone());
        let conc = seq(p.clone(), Context::empty(), Formula::and(q.clone(), w.clone()));
        assert!(check_step(&Rule::AndI, &[&p1, &p2], &conc).is_ok());
        // Swapped premises no longer give the left conjunct first.
        assert_eq!(
            check_step(&Rule::AndI, &[&p2, &p1], &conc).unwrap_err().kind,
            StepErrorKind::SchemaMismatch
        );
        let p1x = seq(p.clone(), ctx(&["x"]), q.clone());
        assert_eq!(
            check_step(&Rule::AndI, &[&p1x, &p2], &conc).unwrap_err().kind,
            StepErrorKind::ContextMismatch
        );

        let proj = seq(Formula::and(p.clone(), q.clone()), Context::empty(), p.clone());
        assert!(check_step(&Rule::AndE0, &[], &proj).is_ok());
        let proj1 = seq(Formula::and(p, q.clone()), Context::empty(), q);
        assert!(check_step(&Rule::AndE1, &[], &proj1).is_ok());
    }

    #[test]
    fn sub_provides_weakening_and_permutation() {
        let rx = Formula::rel("R", vec![tv("x")]);
        let sx = Formula::rel("S", vec![tv("x")]);
        let p = seq(rx.clone(), ctx(&["x"]), sx.clone());
        // Weakening: same formulae in a longer context.
        let weakened = seq(rx.clone(), ctx(&["x", "y"]), sx.clone());
        let theta = Substitution::identity();
        assert!(check_step(&Rule::Sub(theta.clone(), ctx(&["x", "y"])), &[&p], &weakened).is_ok());
        // Permutation: same formulae, context reordered.
        let permuted = seq(rx, ctx(&["y", "x"]), sx);
        assert!(check_step(&Rule::Sub(theta, ctx(&["y", "x"])), &[&weakened], &permuted).is_ok());
    }

    #[test]
    fn sub_substitutes_both_sides() {
        let p = seq(
            Formula::rel("R", vec![tv("x")]),
            ctx(&["x"]),
            Formula::rel("S", vec![tv("x")]),
        );
        let theta = Substitution::single(tv("z"), v("x")).unwrap();
        let conc = seq(
            Formula::rel("R", vec![tv("z")]),
            ctx(&["z"]),
            Formula::rel("S", vec![tv("z")]),
        );
        assert!(check_step(&Rule::Sub(theta.clone(), ctx(&["z"])), &[&p], &conc).is_ok());
        let wrong = seq(
            Formula::rel("R", vec![tv("z")]),
            ctx(&["z", "x"]),
            Formula::rel("S", vec![tv("x")]),
        );
        assert!(check_step(&Rule::Sub(theta, ctx(&["z", "x"])), &[&p], &wrong).is_err());
    }

    #[test]
    fn quantifier_rules() {
        let rx = Formula::rel("R", vec![tv("x")]);
        let q = Formula::prop("Q");
        let p = seq(rx.clone(), ctx(&["x"]), q.clone());
        let down = seq(
            Formula::exists(v("x"), rx.clone()),
            Context::empty(),
            q.clone(),
        );
        assert!(check_step(&Rule::ExistsDown, &[&p], &down).is_ok());
        assert!(check_step(&Rule::ExistsUp, &[&down], &p).is_ok());

        let fa = seq(q.clone(), Context::empty(), Formula::forall(v("x"), rx.clone()));
        let fp = seq(q, ctx(&["x"]), rx);
        assert!(check_step(&Rule::ForallDown, &[&fp], &fa).is_ok());
        assert!(check_step(&Rule::ForallUp, &[&fa], &fp).is_ok());
    }

    #[test]
    fn frobenius_side_conditions() {
        let p = Formula::prop("P");
        let ry = Formula::rel("R", vec![tv("y")]);
        let good = seq(
            Formula::and(p.clone(), Formula::exists(v("y"), ry.clone())),
            Context::empty(),
            Formula::exists(v("y"), Formula::and(p.clone(), ry.clone())),
        );
        assert!(check_step(&Rule::Frobenius, &[], &good).is_ok());
        // Same shape with y in the context violates the side condition.
        let in_ctx = seq(
            Formula::and(p.clone(), Formula::exists(v("y"), ry.clone())),
            ctx(&["y"]),
            Formula::exists(v("y"), Formula::and(p, ry)),
        );
        assert_eq!(
            check_step(&Rule::Frobenius, &[], &in_ctx).unwrap_err().kind,
            StepErrorKind::SideConditionViolated
        );
    }

    #[test]
    fn negation_definition_rule() {
        let p = Formula::prop("P");
        let a = seq(Formula::not(p.clone()), Context::empty(), Formula::prop("Q"));
        let b = seq(
            Formula::implies(p, Formula::Bot),
            Context::empty(),
            Formula::prop("Q"),
        );
        assert!(check_step(&Rule::NegDef, &[&a], &b).is_ok());
        assert!(check_step(&Rule::NegDef, &[&b], &a).is_ok());
    }

    fn internalization_derivation() -> (Derivation, Theory) {
        let s = sig();
        let rx = Formula::rel("R", vec![tv("x")]);
        let sx = Formula::rel("S", vec![tv("x")]);
        let mut t = Theory::new(s);
        t.add_axiom(seq(rx.clone(), ctx(&["x"]), sx.clone())).unwrap();

        let mut d = Derivation::new(Fragment::Intuitionistic);
        d.push(seq(rx.clone(), ctx(&["x"]), sx.clone()), Rule::Hypothesis(1), vec![]);
        d.push(
            seq(Formula::and(rx.clone(), Formula::Top), ctx(&["x"]), rx.clone()),
            Rule::AndE0,
            vec![],
        );
        d.push(
            seq(Formula::and(rx.clone(), Formula::Top), ctx(&["x"]), sx.clone()),
            Rule::Cut,
            vec![2, 1],
        );
        d.push(
            seq(
                Formula::Top,
                ctx(&["x"]),
                Formula::implies(rx.clone(), sx.clone()),
            ),
            Rule::ImpliesUp,
            vec![3],
        );
        d.push(
            seq(
                Formula::Top,
                Context::empty(),
                Formula::forall(v("x"), Formula::implies(rx, sx)),
            ),
            Rule::ForallDown,
            vec![4],
        );
        (d, t)
    }

    #[test]
    fn sequent_internalization_checks() {
        let (d, t) = internalization_derivation();
        assert!(check_derivation(&d, &t).is_ok());
    }

    #[test]
    fn fragment_gate_rejects_implication_in_horn() {
        let (mut d, t) = internalization_derivation();
        d.declared = Fragment::Horn;
        let errs = check_derivation(&d, &t).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.line == 4 && e.kind == StepErrorKind::FragmentViolation));
        assert!(errs
            .iter()
            .any(|e| e.line == 5 && e.kind == StepErrorKind::FragmentViolation));
    }

    #[test]
    fn hypothesis_must_match_axiom() {
        let (mut d, t) = internalization_derivation();
        d.lines[0].sequent = seq(
            Formula::rel("S", vec![tv("x")]),
            ctx(&["x"]),
            Formula::rel("R", vec![tv("x")]),
        );
        let errs = check_derivation(&d, &t).unwrap_err();
        assert_eq!(errs[0].line, 1);
        assert_eq!(errs[0].kind, StepErrorKind::SchemaMismatch);
    }

    #[test]
    fn forward_references_rejected() {
        let s = sig();
        let t = Theory::new(s);
        let mut d = Derivation::new(Fragment::Horn);
        d.push(
            seq(Formula::prop("P"), Context::empty(), Formula::prop("P")),
            Rule::Cut,
            vec![1, 2],
        );
        let errs = check_derivation(&d, &t).unwrap_err();
        assert!(errs.iter().all(|e| e.kind == StepErrorKind::BadReference));
    }

    #[test]
    fn unexpanded_theorem_reference_rejected() {
        let s = sig();
        let t = Theory::new(s);
        let mut d = Derivation::new(Fragment::Horn);
        d.push(
            seq(Formula::prop("P"), Context::empty(), Formula::prop("P")),
            Rule::TheoremRef("anything".to_string()),
            vec![],
        );
        assert!(check_derivation(&d, &t).is_err());
    }
}
