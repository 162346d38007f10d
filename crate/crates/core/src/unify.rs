//! Unification of term and formula lists, with and without contexts.
//!
//! Each unifier takes two equal-length lists and an initial substitution
//! and either produces a substitution equalizing the lists pairwise or
//! reports why none exists. The in-context variants additionally bring
//! every expression into one shared context (the substitution's canonical
//! context), which is what the substitution rule downstream needs.
//!
//! The result substitution is the eager composition of the per-step
//! substitutions; the step chain is retained in a trace for display.

use std::collections::BTreeSet;

use crate::subst::{
    apply_formula, apply_formula_in_context, apply_term, apply_term_in_context,
    FreshVariableSource, Substitution,
};
use crate::syntax::{
    canonical_context_of_terms, Context, Formula, FormulaInContext, Signature, Term,
    TermInContext, Variable,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoUnifyReason {
    LengthMismatch,
    SortClash,
    SymbolClash,
    OccursCheck,
    QuantifierSortClash,
}

impl std::fmt::Display for NoUnifyReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NoUnifyReason::LengthMismatch => "length mismatch",
            NoUnifyReason::SortClash => "sort clash",
            NoUnifyReason::SymbolClash => "symbol clash",
            NoUnifyReason::OccursCheck => "occurs check",
            NoUnifyReason::QuantifierSortClash => "quantifier sort clash",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UnifyOutcome {
    Unifier(Substitution),
    NoUnifier(NoUnifyReason),
}

impl UnifyOutcome {
    pub fn unifier(&self) -> Option<&Substitution> {
        match self {
            UnifyOutcome::Unifier(theta) => Some(theta),
            UnifyOutcome::NoUnifier(_) => None,
        }
    }

    pub fn into_unifier(self) -> Option<Substitution> {
        match self {
            UnifyOutcome::Unifier(theta) => Some(theta),
            UnifyOutcome::NoUnifier(_) => None,
        }
    }

    pub fn is_unifier(&self) -> bool {
        matches!(self, UnifyOutcome::Unifier(_))
    }
}

/// One step of a unification run: which branch fired and, when the branch
/// produced a substitution fragment, that fragment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnifyStep {
    pub label: String,
    pub produced: Option<Substitution>,
}

pub type UnifyTrace = Vec<UnifyStep>;

// The procedures terminate (variables strictly decrease at variable
// elimination, symbols at decomposition); the fuel counter only guards
// against transcription bugs and is generous enough never to fire.
const FUEL: u64 = 1 << 20;

struct Fuel(u64);

impl Fuel {
    fn tick(&mut self) {
        self.0 -= 1;
        if self.0 == 0 {
            panic!("unification fuel exhausted: non-termination bug");
        }
    }
}

fn step(trace: &mut UnifyTrace, label: &str, produced: Option<&Substitution>) {
    trace.push(UnifyStep {
        label: label.to_string(),
        produced: produced.cloned(),
    });
}

fn term_sort(sig: &Signature, t: &Term) -> crate::syntax::SortName {
    sig.sort_of(t).expect("unification input must be well-formed")
}

// ---------------------------------------------------------------------
// Bare term lists.

pub fn unify_terms(
    sig: &Signature,
    lhs: &[Term],
    rhs: &[Term],
    theta0: &Substitution,
) -> UnifyOutcome {
    unify_terms_traced(sig, lhs, rhs, theta0).0
}

pub fn unify_terms_traced(
    sig: &Signature,
    lhs: &[Term],
    rhs: &[Term],
    theta0: &Substitution,
) -> (UnifyOutcome, UnifyTrace) {
    let mut trace = Vec::new();
    let mut fuel = Fuel(FUEL);
    let out = go_terms(
        sig,
        lhs.to_vec(),
        rhs.to_vec(),
        theta0.clone(),
        &mut fuel,
        &mut trace,
    );
    (out, trace)
}

fn go_terms(
    sig: &Signature,
    mut ls: Vec<Term>,
    mut rs: Vec<Term>,
    theta: Substitution,
    fuel: &mut Fuel,
    trace: &mut UnifyTrace,
) -> UnifyOutcome {
    fuel.tick();
    if ls.len() != rs.len() {
        return UnifyOutcome::NoUnifier(NoUnifyReason::LengthMismatch);
    }
    if ls.is_empty() {
        return UnifyOutcome::Unifier(theta);
    }
    let a = ls.remove(0);
    let b = rs.remove(0);
    if term_sort(sig, &a) != term_sort(sig, &b) {
        return UnifyOutcome::NoUnifier(NoUnifyReason::SortClash);
    }
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => {
            step(trace, "A", None);
            go_terms(sig, ls, rs, theta, fuel, trace)
        }
        (Term::Var(x), Term::Var(_)) => {
            let t1 = Substitution::single(b.clone(), x.clone()).expect("sorts agree");
            step(trace, "B", Some(&t1));
            apply_and_continue_terms(sig, ls, rs, theta, t1, fuel, trace)
        }
        (Term::Var(x), Term::App(..)) => {
            if b.free_variables().contains(x) {
                return UnifyOutcome::NoUnifier(NoUnifyReason::OccursCheck);
            }
            let t1 = Substitution::single(b.clone(), x.clone()).expect("distinct target");
            step(trace, "C", Some(&t1));
            apply_and_continue_terms(sig, ls, rs, theta, t1, fuel, trace)
        }
        (Term::App(..), Term::Var(_)) => {
            step(trace, "D", None);
            ls.insert(0, b);
            rs.insert(0, a);
            go_terms(sig, ls, rs, theta, fuel, trace)
        }
        (Term::App(f, ss), Term::App(g, ts)) => {
            if f != g {
                return UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash);
            }
            debug_assert_eq!(ss.len(), ts.len());
            step(trace, "E", None);
            let mut ls2 = ss.clone();
            ls2.extend(ls);
            let mut rs2 = ts.clone();
            rs2.extend(rs);
            go_terms(sig, ls2, rs2, theta, fuel, trace)
        }
    }
}

fn apply_and_continue_terms(
    sig: &Signature,
    ls: Vec<Term>,
    rs: Vec<Term>,
    theta: Substitution,
    t1: Substitution,
    fuel: &mut Fuel,
    trace: &mut UnifyTrace,
) -> UnifyOutcome {
    let ls2 = ls.iter().map(|t| apply_term(t, &t1)).collect();
    let rs2 = rs.iter().map(|t| apply_term(t, &t1)).collect();
    go_terms(sig, ls2, rs2, theta.compose(&t1), fuel, trace)
}

// ---------------------------------------------------------------------
// Term-in-context lists.

pub fn unify_terms_in_context(
    sig: &Signature,
    lhs: &[TermInContext],
    rhs: &[TermInContext],
    theta0: &Substitution,
) -> UnifyOutcome {
    unify_terms_in_context_traced(sig, lhs, rhs, theta0).0
}

pub fn unify_terms_in_context_traced(
    sig: &Signature,
    lhs: &[TermInContext],
    rhs: &[TermInContext],
    theta0: &Substitution,
) -> (UnifyOutcome, UnifyTrace) {
    let mut trace = Vec::new();
    let mut fuel = Fuel(FUEL);
    let out = go_tic(
        sig,
        lhs.to_vec(),
        rhs.to_vec(),
        theta0.clone(),
        &mut fuel,
        &mut trace,
    );
    (out, trace)
}

// Context for the eliminating substitution: the concatenation of both
// head contexts (left first, order preserving) minus the given variables.
fn merged_context_without(a: &Context, b: &Context, removed: &BTreeSet<Variable>) -> Vec<Variable> {
    a.concat(b)
        .iter()
        .filter(|v| !removed.contains(v))
        .cloned()
        .collect()
}

fn elimination(z: Vec<Variable>, term: Term, target: Variable) -> Substitution {
    let mut pairs: Vec<(Term, Variable)> =
        z.into_iter().map(|v| (Term::var(v.clone()), v)).collect();
    pairs.push((term, target));
    Substitution::new(pairs).expect("distinct targets by construction")
}

fn go_tic(
    sig: &Signature,
    mut ls: Vec<TermInContext>,
    mut rs: Vec<TermInContext>,
    theta: Substitution,
    fuel: &mut Fuel,
    trace: &mut UnifyTrace,
) -> UnifyOutcome {
    fuel.tick();
    if ls.len() != rs.len() {
        return UnifyOutcome::NoUnifier(NoUnifyReason::LengthMismatch);
    }
    if ls.is_empty() {
        return UnifyOutcome::Unifier(theta);
    }
    let a = ls.remove(0);
    let b = rs.remove(0);
    if term_sort(sig, a.term()) != term_sort(sig, b.term()) {
        return UnifyOutcome::NoUnifier(NoUnifyReason::SortClash);
    }
    match (a.term().clone(), b.term().clone()) {
        (Term::Var(x), Term::Var(y)) if x == y => {
            let mut removed = BTreeSet::new();
            removed.insert(x.clone());
            let z = merged_context_without(a.ctx(), b.ctx(), &removed);
            let t1 = elimination(z, Term::var(x.clone()), x);
            step(trace, "A", Some(&t1));
            apply_and_continue_tic(sig, ls, rs, theta, t1, fuel, trace)
        }
        (Term::Var(x), Term::Var(y)) => {
            let mut removed = BTreeSet::new();
            removed.insert(x.clone());
            removed.insert(y.clone());
            let z = merged_context_without(a.ctx(), b.ctx(), &removed);
            let t1 = elimination(z, Term::var(y), x);
            step(trace, "B", Some(&t1));
            apply_and_continue_tic(sig, ls, rs, theta, t1, fuel, trace)
        }
        (Term::Var(x), g @ Term::App(..)) => {
            if g.free_variables().contains(&x) {
                return UnifyOutcome::NoUnifier(NoUnifyReason::OccursCheck);
            }
            let mut removed = g.free_variables();
            removed.insert(x.clone());
            let z = merged_context_without(a.ctx(), b.ctx(), &removed);
            let t1 = elimination(z, g, x);
            step(trace, "C", Some(&t1));
            apply_and_continue_tic(sig, ls, rs, theta, t1, fuel, trace)
        }
        (Term::App(..), Term::Var(_)) => {
            step(trace, "D", None);
            ls.insert(0, b);
            rs.insert(0, a);
            go_tic(sig, ls, rs, theta, fuel, trace)
        }
        (Term::App(f, ss), Term::App(g, ts)) => {
            if f != g {
                return UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash);
            }
            debug_assert_eq!(ss.len(), ts.len());
            step(trace, "E", None);
            let sub_l = ss
                .into_iter()
                .map(|s| TermInContext::new(a.ctx().clone(), s).expect("subterm stays suitable"));
            let sub_r = ts
                .into_iter()
                .map(|t| TermInContext::new(b.ctx().clone(), t).expect("subterm stays suitable"));
            let mut ls2: Vec<TermInContext> = sub_l.collect();
            ls2.extend(ls);
            let mut rs2: Vec<TermInContext> = sub_r.collect();
            rs2.extend(rs);
            go_tic(sig, ls2, rs2, theta, fuel, trace)
        }
    }
}

fn apply_and_continue_tic(
    sig: &Signature,
    ls: Vec<TermInContext>,
    rs: Vec<TermInContext>,
    theta: Substitution,
    t1: Substitution,
    fuel: &mut Fuel,
    trace: &mut UnifyTrace,
) -> UnifyOutcome {
    let ls2 = ls.iter().map(|t| apply_term_in_context(t, &t1)).collect();
    let rs2 = rs.iter().map(|t| apply_term_in_context(t, &t1)).collect();
    go_tic(sig, ls2, rs2, theta.compose(&t1), fuel, trace)
}

// ---------------------------------------------------------------------
// Bare formula lists.

pub fn unify_formulae(
    sig: &Signature,
    lhs: &[Formula],
    rhs: &[Formula],
    theta0: &Substitution,
) -> UnifyOutcome {
    unify_formulae_traced(sig, lhs, rhs, theta0).0
}

pub fn unify_formulae_traced(
    sig: &Signature,
    lhs: &[Formula],
    rhs: &[Formula],
    theta0: &Substitution,
) -> (UnifyOutcome, UnifyTrace) {
    let mut trace = Vec::new();
    let mut fuel = Fuel(FUEL);
    let out = go_formulae(
        sig,
        lhs.to_vec(),
        rhs.to_vec(),
        theta0.clone(),
        &mut fuel,
        &mut trace,
    );
    (out, trace)
}

fn all_formula_variables<'a, I: IntoIterator<Item = &'a Formula>>(
    iter: I,
) -> BTreeSet<Variable> {
    let mut out = BTreeSet::new();
    for f in iter {
        out.extend(f.all_variables());
    }
    out
}

// Renaming for a quantifier step: u2 replaces free x, u3 replaces free y;
// a single pair when the two binders are the same variable.
fn binder_renaming(x: &Variable, y: &Variable, u2: &Variable, u3: &Variable) -> Substitution {
    let pairs = if x == y {
        vec![(Term::var(u2.clone()), x.clone())]
    } else {
        vec![
            (Term::var(u2.clone()), x.clone()),
            (Term::var(u3.clone()), y.clone()),
        ]
    };
    Substitution::new(pairs).expect("distinct targets")
}

fn go_formulae(
    sig: &Signature,
    mut ls: Vec<Formula>,
    mut rs: Vec<Formula>,
    theta: Substitution,
    fuel: &mut Fuel,
    trace: &mut UnifyTrace,
) -> UnifyOutcome {
    fuel.tick();
    if ls.len() != rs.len() {
        return UnifyOutcome::NoUnifier(NoUnifyReason::LengthMismatch);
    }
    if ls.is_empty() {
        return UnifyOutcome::Unifier(theta);
    }
    let a = ls.remove(0);
    let b = rs.remove(0);
    match (&a, &b) {
        (Formula::Eq(s1, s2), Formula::Eq(t1, t2)) => {
            step(trace, "eq", None);
            let inner = go_terms(
                sig,
                vec![s1.clone(), s2.clone()],
                vec![t1.clone(), t2.clone()],
                theta.clone(),
                fuel,
                trace,
            );
            continue_formulae_after_terms(sig, ls, rs, theta, inner, fuel, trace)
        }
        (Formula::Rel(q, ss), Formula::Rel(r, ts)) => {
            if q != r {
                return UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash);
            }
            step(trace, "rel", None);
            let inner = go_terms(sig, ss.clone(), ts.clone(), theta.clone(), fuel, trace);
            continue_formulae_after_terms(sig, ls, rs, theta, inner, fuel, trace)
        }
        (Formula::Top, Formula::Top) | (Formula::Bot, Formula::Bot) => {
            step(trace, "truth", None);
            go_formulae(sig, ls, rs, theta, fuel, trace)
        }
        (Formula::And(p, p2), Formula::And(q, q2))
        | (Formula::Or(p, p2), Formula::Or(q, q2))
        | (Formula::Implies(p, p2), Formula::Implies(q, q2)) => {
            step(trace, "connective", None);
            ls.insert(0, (**p2).clone());
            ls.insert(0, (**p).clone());
            rs.insert(0, (**q2).clone());
            rs.insert(0, (**q).clone());
            go_formulae(sig, ls, rs, theta, fuel, trace)
        }
        (Formula::Not(p), Formula::Not(q)) => {
            step(trace, "not", None);
            ls.insert(0, (**p).clone());
            rs.insert(0, (**q).clone());
            go_formulae(sig, ls, rs, theta, fuel, trace)
        }
        (Formula::Exists(x, phi), Formula::Exists(y, psi))
        | (Formula::Forall(x, phi), Formula::Forall(y, psi)) => {
            if x.sort() != y.sort() {
                return UnifyOutcome::NoUnifier(NoUnifyReason::QuantifierSortClash);
            }
            let mut avoid = all_formula_variables(
                std::iter::once(&a).chain(std::iter::once(&b)).chain(&ls).chain(&rs),
            );
            avoid.extend(theta.variables());
            let mut src = FreshVariableSource::avoiding(avoid.iter());
            let u1 = src.fresh_like(x);
            let u2 = src.fresh_like(x);
            let u3 = if x == y { u2.clone() } else { src.fresh_like(x) };
            let rename_both = binder_renaming(x, y, &u2, &u3);
            step(trace, "quantifier", Some(&rename_both));

            let r_u1_x = Substitution::rename(x.clone(), u1.clone()).expect("same sort");
            let r_u1_y = Substitution::rename(y.clone(), u1.clone()).expect("same sort");
            let r_u3_y = Substitution::rename(y.clone(), u3.clone()).expect("same sort");
            let r_u2_x = Substitution::rename(x.clone(), u2.clone()).expect("same sort");

            let head_l = apply_formula(&apply_formula(phi, &r_u1_x), &r_u3_y);
            let head_r = apply_formula(&apply_formula(psi, &r_u1_y), &r_u2_x);

            let mut ls2: Vec<Formula> =
                ls.iter().map(|f| apply_formula(f, &rename_both)).collect();
            ls2.insert(0, head_l);
            let mut rs2: Vec<Formula> =
                rs.iter().map(|f| apply_formula(f, &rename_both)).collect();
            rs2.insert(0, head_r);
            go_formulae(sig, ls2, rs2, theta.compose(&rename_both), fuel, trace)
        }
        _ => UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash),
    }
}

fn continue_formulae_after_terms(
    sig: &Signature,
    ls: Vec<Formula>,
    rs: Vec<Formula>,
    theta: Substitution,
    inner: UnifyOutcome,
    fuel: &mut Fuel,
    trace: &mut UnifyTrace,
) -> UnifyOutcome {
    let t2 = match inner {
        UnifyOutcome::Unifier(t2) => t2,
        no => return no,
    };
    let ls2 = ls.iter().map(|f| apply_formula(f, &t2)).collect();
    let rs2 = rs.iter().map(|f| apply_formula(f, &t2)).collect();
    go_formulae(sig, ls2, rs2, theta.compose(&t2), fuel, trace)
}

// ---------------------------------------------------------------------
// Formula-in-context lists.

pub fn unify_formulae_in_context(
    sig: &Signature,
    lhs: &[FormulaInContext],
    rhs: &[FormulaInContext],
    theta0: &Substitution,
) -> UnifyOutcome {
    unify_formulae_in_context_traced(sig, lhs, rhs, theta0).0
}

pub fn unify_formulae_in_context_traced(
    sig: &Signature,
    lhs: &[FormulaInContext],
    rhs: &[FormulaInContext],
    theta0: &Substitution,
) -> (UnifyOutcome, UnifyTrace) {
    let mut trace = Vec::new();
    let mut fuel = Fuel(FUEL);
    let out = go_fic(
        sig,
        lhs.to_vec(),
        rhs.to_vec(),
        theta0.clone(),
        &mut fuel,
        &mut trace,
    );
    (out, trace)
}

fn tic(ctx: &Context, t: &Term) -> TermInContext {
    TermInContext::new(ctx.clone(), t.clone()).expect("argument terms stay suitable")
}

fn go_fic(
    sig: &Signature,
    mut ls: Vec<FormulaInContext>,
    mut rs: Vec<FormulaInContext>,
    theta: Substitution,
    fuel: &mut Fuel,
    trace: &mut UnifyTrace,
) -> UnifyOutcome {
    fuel.tick();
    if ls.len() != rs.len() {
        return UnifyOutcome::NoUnifier(NoUnifyReason::LengthMismatch);
    }
    if ls.is_empty() {
        return UnifyOutcome::Unifier(theta);
    }
    let a = ls.remove(0);
    let b = rs.remove(0);
    match (a.formula(), b.formula()) {
        (Formula::Eq(s1, s2), Formula::Eq(t1, t2)) => {
            step(trace, "eq", None);
            let inner = go_tic(
                sig,
                vec![tic(a.ctx(), s1), tic(a.ctx(), s2)],
                vec![tic(b.ctx(), t1), tic(b.ctx(), t2)],
                theta.clone(),
                fuel,
                trace,
            );
            continue_fic_after_terms(sig, ls, rs, theta, inner, fuel, trace)
        }
        (Formula::Rel(q, ss), Formula::Rel(r, ts)) => {
            if q != r {
                return UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash);
            }
            step(trace, "rel", None);
            let inner = go_tic(
                sig,
                ss.iter().map(|s| tic(a.ctx(), s)).collect(),
                ts.iter().map(|t| tic(b.ctx(), t)).collect(),
                theta.clone(),
                fuel,
                trace,
            );
            continue_fic_after_terms(sig, ls, rs, theta, inner, fuel, trace)
        }
        (Formula::Top, Formula::Top) | (Formula::Bot, Formula::Bot) => {
            step(trace, "truth", None);
            go_fic(sig, ls, rs, theta, fuel, trace)
        }
        (Formula::And(p, p2), Formula::And(q, q2))
        | (Formula::Or(p, p2), Formula::Or(q, q2))
        | (Formula::Implies(p, p2), Formula::Implies(q, q2)) => {
            step(trace, "connective", None);
            let fl =
                |f: &Formula| FormulaInContext::new(a.ctx().clone(), f.clone()).expect("suitable");
            let fr =
                |f: &Formula| FormulaInContext::new(b.ctx().clone(), f.clone()).expect("suitable");
            ls.insert(0, fl(p2));
            ls.insert(0, fl(p));
            rs.insert(0, fr(q2));
            rs.insert(0, fr(q));
            go_fic(sig, ls, rs, theta, fuel, trace)
        }
        (Formula::Not(p), Formula::Not(q)) => {
            step(trace, "not", None);
            ls.insert(
                0,
                FormulaInContext::new(a.ctx().clone(), (**p).clone()).expect("suitable"),
            );
            rs.insert(
                0,
                FormulaInContext::new(b.ctx().clone(), (**q).clone()).expect("suitable"),
            );
            go_fic(sig, ls, rs, theta, fuel, trace)
        }
        (Formula::Exists(x, phi), Formula::Exists(y, psi))
        | (Formula::Forall(x, phi), Formula::Forall(y, psi)) => {
            if x.sort() != y.sort() {
                return UnifyOutcome::NoUnifier(NoUnifyReason::QuantifierSortClash);
            }
            let x = x.clone();
            let y = y.clone();
            let phi = (**phi).clone();
            let psi = (**psi).clone();
            // Fresh names avoid every variable in both full lists (stricter
            // than just the head contexts and binders) plus the accumulator.
            let mut avoid: BTreeSet<Variable> = BTreeSet::new();
            for f in std::iter::once(&a).chain(std::iter::once(&b)).chain(&ls).chain(&rs) {
                avoid.extend(f.formula().all_variables());
                avoid.extend(f.ctx().iter().cloned());
            }
            avoid.extend(theta.variables());
            let mut src = FreshVariableSource::avoiding(avoid.iter());
            let u1 = src.fresh_like(&x);
            let u2 = src.fresh_like(&x);
            let u3 = if x == y { u2.clone() } else { src.fresh_like(&x) };
            let rename_both = binder_renaming(&x, &y, &u2, &u3);
            step(trace, "quantifier", Some(&rename_both));

            let r_u1_x = Substitution::rename(x.clone(), u1.clone()).expect("same sort");
            let r_u1_y = Substitution::rename(y.clone(), u1.clone()).expect("same sort");
            let r_u3_y = Substitution::rename(y.clone(), u3.clone()).expect("same sort");
            let r_u2_x = Substitution::rename(x.clone(), u2.clone()).expect("same sort");

            let head_l = FormulaInContext::new(
                a.ctx().extended(u1.clone()).expect("u1 is fresh"),
                apply_formula(&phi, &r_u1_x),
            )
            .expect("binder moved into context");
            let head_l = apply_formula_in_context(&head_l, &r_u3_y);
            let head_r = FormulaInContext::new(
                b.ctx().extended(u1.clone()).expect("u1 is fresh"),
                apply_formula(&psi, &r_u1_y),
            )
            .expect("binder moved into context");
            let head_r = apply_formula_in_context(&head_r, &r_u2_x);

            let mut ls2: Vec<FormulaInContext> = ls
                .iter()
                .map(|f| apply_formula_in_context(f, &rename_both))
                .collect();
            ls2.insert(0, head_l);
            let mut rs2: Vec<FormulaInContext> = rs
                .iter()
                .map(|f| apply_formula_in_context(f, &rename_both))
                .collect();
            rs2.insert(0, head_r);
            go_fic(sig, ls2, rs2, theta.compose(&rename_both), fuel, trace)
        }
        _ => UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash),
    }
}

fn continue_fic_after_terms(
    sig: &Signature,
    ls: Vec<FormulaInContext>,
    rs: Vec<FormulaInContext>,
    theta: Substitution,
    inner: UnifyOutcome,
    fuel: &mut Fuel,
    trace: &mut UnifyTrace,
) -> UnifyOutcome {
    let t2 = match inner {
        UnifyOutcome::Unifier(t2) => t2,
        no => return no,
    };
    let ls2 = ls
        .iter()
        .map(|f| apply_formula_in_context(f, &t2))
        .collect();
    let rs2 = rs
        .iter()
        .map(|f| apply_formula_in_context(f, &t2))
        .collect();
    go_fic(sig, ls2, rs2, theta.compose(&t2), fuel, trace)
}

/// The shared context a unifier brings every expression into: the
/// canonical context of its replacement terms in pair order.
pub fn unified_context(theta: &Substitution) -> Context {
    let terms: Vec<Term> = theta.terms().cloned().collect();
    canonical_context_of_terms(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::alpha_equivalent;

    fn sig() -> Signature {
        let mut s = Signature::new();
        s.add_sort("A").unwrap();
        s.add_function("f", vec!["A".into()], "A").unwrap();
        s.add_function("g", vec!["A".into()], "A").unwrap();
        s.add_function("h", vec!["A".into(), "A".into()], "A").unwrap();
        s.add_constant("c", "A").unwrap();
        s.add_relation("R", vec!["A".into(), "A".into()]).unwrap();
        s.add_relation("S", vec!["A".into()]).unwrap();
        s.add_relation("P", vec!["A".into()]).unwrap();
        s.add_relation("B", vec!["A".into()]).unwrap();
        s.add_relation("C", vec!["A".into()]).unwrap();
        s
    }

    fn v(n: &str) -> Variable {
        Variable::new(n, "A")
    }

    fn tv(n: &str) -> Term {
        Term::var(v(n))
    }

    fn ctx(names: &[&str]) -> Context {
        Context::new(names.iter().map(|n| v(n)).collect()).unwrap()
    }

    fn id() -> Substitution {
        Substitution::identity()
    }

    #[test]
    fn terms_worked_example() {
        // [g(x), f(y)] vs [g(f(y)), f(g(z))]
        let s = sig();
        let lhs = vec![
            Term::app("g", vec![tv("x")]),
            Term::app("f", vec![tv("y")]),
        ];
        let rhs = vec![
            Term::app("g", vec![Term::app("f", vec![tv("y")])]),
            Term::app("f", vec![Term::app("g", vec![tv("z")])]),
        ];
        let (out, trace) = unify_terms_traced(&s, &lhs, &rhs, &id());
        let theta = out.into_unifier().expect("unifiable");
        let fgz = Term::app("f", vec![Term::app("g", vec![tv("z")])]);
        let gz = Term::app("g", vec![tv("z")]);
        assert_eq!(theta.lookup(&v("x")), Some(&fgz));
        assert_eq!(theta.lookup(&v("y")), Some(&gz));
        for (a, b) in lhs.iter().zip(&rhs) {
            assert_eq!(apply_term(a, &theta), apply_term(b, &theta));
        }
        let labels: Vec<&str> = trace.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, vec!["E", "C", "E", "C"]);
    }

    #[test]
    fn terms_occurs_check() {
        // [f(x, g(x))] vs [f(y, y)]
        let s = sig();
        let lhs = vec![Term::app("f2", vec![])];
        // f here must be binary; reuse h for the two-argument symbol.
        let _ = lhs;
        let lhs = vec![Term::app("h", vec![tv("x"), Term::app("g", vec![tv("x")])])];
        let rhs = vec![Term::app("h", vec![tv("y"), tv("y")])];
        let out = unify_terms(&s, &lhs, &rhs, &id());
        assert_eq!(out, UnifyOutcome::NoUnifier(NoUnifyReason::OccursCheck));
    }

    #[test]
    fn terms_trivial_cases() {
        let s = sig();
        let out = unify_terms(&s, &[tv("x")], &[tv("x")], &id());
        assert_eq!(out, UnifyOutcome::Unifier(id()));
        let out = unify_terms(&s, &[tv("x")], &[tv("x"), tv("y")], &id());
        assert_eq!(out, UnifyOutcome::NoUnifier(NoUnifyReason::LengthMismatch));
        let out = unify_terms(
            &s,
            &[Term::app("f", vec![tv("x")])],
            &[Term::app("g", vec![tv("x")])],
            &id(),
        );
        assert_eq!(out, UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash));
    }

    #[test]
    fn terms_in_context_worked_example() {
        // [u,x . g(x); a,y . f(y)] vs [b,x,y . g(f(y)); k,z . f(g(z))]
        let s = sig();
        let lhs = vec![
            TermInContext::new(ctx(&["u", "x"]), Term::app("g", vec![tv("x")])).unwrap(),
            TermInContext::new(ctx(&["a", "y"]), Term::app("f", vec![tv("y")])).unwrap(),
        ];
        let rhs = vec![
            TermInContext::new(
                ctx(&["b", "x", "y"]),
                Term::app("g", vec![Term::app("f", vec![tv("y")])]),
            )
            .unwrap(),
            TermInContext::new(
                ctx(&["k", "z"]),
                Term::app("f", vec![Term::app("g", vec![tv("z")])]),
            )
            .unwrap(),
        ];
        let theta = unify_terms_in_context(&s, &lhs, &rhs, &id())
            .into_unifier()
            .expect("unifiable");
        let fgz = Term::app("f", vec![Term::app("g", vec![tv("z")])]);
        let gz = Term::app("g", vec![tv("z")]);
        assert_eq!(theta.lookup(&v("x")), Some(&fgz));
        assert_eq!(theta.lookup(&v("y")), Some(&gz));

        let results: Vec<TermInContext> = lhs
            .iter()
            .chain(&rhs)
            .map(|t| apply_term_in_context(t, &theta))
            .collect();
        for (a, b) in lhs.iter().zip(&rhs) {
            assert_eq!(
                apply_term_in_context(a, &theta),
                apply_term_in_context(b, &theta)
            );
        }
        // All four land in one context covering exactly u, b, k, a, z.
        let shared = results[0].ctx().clone();
        for r in &results {
            assert_eq!(r.ctx(), &shared);
        }
        assert_eq!(shared.var_set(), ctx(&["u", "b", "k", "a", "z"]).var_set());
        assert_eq!(
            results[0].term(),
            &Term::app("g", vec![Term::app("f", vec![gz.clone()])])
        );
        assert_eq!(results[1].term(), &fgz);
    }

    #[test]
    fn terms_in_context_case_a_inert() {
        let s = sig();
        let t = TermInContext::new(ctx(&["x"]), tv("x")).unwrap();
        let theta = unify_terms_in_context(&s, std::slice::from_ref(&t), std::slice::from_ref(&t), &id())
            .into_unifier()
            .unwrap();
        assert_eq!(theta.pairs(), &[(tv("x"), v("x"))]);
        assert!(theta.is_renaming_identity());
    }

    #[test]
    fn terms_in_context_case_b() {
        let s = sig();
        let a = TermInContext::new(ctx(&["x"]), tv("x")).unwrap();
        let b = TermInContext::new(ctx(&["y"]), tv("y")).unwrap();
        let theta = unify_terms_in_context(&s, std::slice::from_ref(&a), std::slice::from_ref(&b), &id())
            .into_unifier()
            .unwrap();
        assert_eq!(theta.pairs(), &[(tv("y"), v("x"))]);
        let ra = apply_term_in_context(&a, &theta);
        let rb = apply_term_in_context(&b, &theta);
        assert_eq!(ra, rb);
        assert_eq!(ra, TermInContext::new(ctx(&["y"]), tv("y")).unwrap());
    }

    #[test]
    fn formulae_worked_example() {
        // [(exists x) R(x,y), P(x)] vs [(exists y) R(y,z), P(t)]
        let s = sig();
        let lhs = vec![
            Formula::exists(v("x"), Formula::rel("R", vec![tv("x"), tv("y")])),
            Formula::rel("P", vec![tv("x")]),
        ];
        let rhs = vec![
            Formula::exists(v("y"), Formula::rel("R", vec![tv("y"), tv("z")])),
            Formula::rel("P", vec![tv("t")]),
        ];
        let theta = unify_formulae(&s, &lhs, &rhs, &id())
            .into_unifier()
            .expect("unifiable");
        assert_eq!(
            theta.pairs(),
            &[
                (tv("t"), v("x")),
                (tv("z"), v("y")),
                (tv("z"), v("x_3")),
                (tv("t"), v("x_2")),
            ]
        );
        assert_eq!(theta.to_string(), "[t, z, z, t / x, y, x_3, x_2]");
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!(alpha_equivalent(
                &apply_formula(a, &theta),
                &apply_formula(b, &theta)
            ));
        }
    }

    #[test]
    fn formulae_trivial_cases() {
        let s = sig();
        assert_eq!(
            unify_formulae(&s, &[Formula::Top], &[Formula::Top], &id()),
            UnifyOutcome::Unifier(id())
        );
        assert_eq!(
            unify_formulae(
                &s,
                &[Formula::rel("S", vec![tv("x")])],
                &[Formula::rel("P", vec![tv("x")])],
                &id()
            ),
            UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash)
        );
        assert_eq!(
            unify_formulae(&s, &[Formula::Top], &[Formula::Bot], &id()),
            UnifyOutcome::NoUnifier(NoUnifyReason::SymbolClash)
        );
    }

    #[test]
    fn formulae_same_binder_uses_one_rename() {
        let s = sig();
        let lhs = vec![Formula::exists(v("x"), Formula::rel("S", vec![tv("x")]))];
        let rhs = vec![Formula::exists(v("x"), Formula::rel("S", vec![tv("x")]))];
        let theta = unify_formulae(&s, &lhs, &rhs, &id())
            .into_unifier()
            .expect("unifiable");
        assert!(alpha_equivalent(
            &apply_formula(&lhs[0], &theta),
            &apply_formula(&rhs[0], &theta)
        ));
    }

    #[test]
    fn fic_single_relation_discovers_context_merge() {
        // [x1,y . B(x1)] vs [x3 . B(x3)]
        let s = sig();
        let lhs = vec![FormulaInContext::new(
            ctx(&["x_1", "y"]),
            Formula::rel("B", vec![tv("x_1")]),
        )
        .unwrap()];
        let rhs =
            vec![FormulaInContext::new(ctx(&["x_3"]), Formula::rel("B", vec![tv("x_3")])).unwrap()];
        let theta = unify_formulae_in_context(&s, &lhs, &rhs, &id())
            .into_unifier()
            .expect("unifiable");
        assert_eq!(theta.pairs(), &[(tv("y"), v("y")), (tv("x_3"), v("x_1"))]);
        assert_eq!(theta.to_string(), "[x_3 / x_1]");
    }

    #[test]
    fn fic_two_relations_worked_example() {
        // [x2,w1 . B(x2); x2,w1 . C(x2)] vs [y,x3 . B(x3); x4,w2,z . C(x4)]
        let s = sig();
        let lhs = vec![
            FormulaInContext::new(ctx(&["x_2", "w_1"]), Formula::rel("B", vec![tv("x_2")]))
                .unwrap(),
            FormulaInContext::new(ctx(&["x_2", "w_1"]), Formula::rel("C", vec![tv("x_2")]))
                .unwrap(),
        ];
        let rhs = vec![
            FormulaInContext::new(ctx(&["y", "x_3"]), Formula::rel("B", vec![tv("x_3")])).unwrap(),
            FormulaInContext::new(ctx(&["x_4", "w_2", "z"]), Formula::rel("C", vec![tv("x_4")]))
                .unwrap(),
        ];
        let theta = unify_formulae_in_context(&s, &lhs, &rhs, &id())
            .into_unifier()
            .expect("unifiable");
        assert_eq!(theta.lookup(&v("x_2")), Some(&tv("x_4")));
        assert_eq!(theta.lookup(&v("x_3")), Some(&tv("x_4")));
        for w in ["w_1", "y", "w_2", "z"] {
            assert_eq!(theta.lookup(&v(w)), Some(&tv(w)));
        }
        let mut shared: Option<Context> = None;
        for (a, b) in lhs.iter().zip(&rhs) {
            let ra = apply_formula_in_context(a, &theta);
            let rb = apply_formula_in_context(b, &theta);
            assert_eq!(ra.ctx(), rb.ctx());
            assert!(alpha_equivalent(ra.formula(), rb.formula()));
            if let Some(c) = &shared {
                assert_eq!(ra.ctx(), c);
            }
            shared = Some(ra.ctx().clone());
        }
    }

    #[test]
    fn fic_quantifier_case() {
        let s = sig();
        let lhs = vec![FormulaInContext::new(
            Context::empty(),
            Formula::exists(v("x"), Formula::rel("S", vec![tv("x")])),
        )
        .unwrap()];
        let rhs = vec![FormulaInContext::new(
            Context::empty(),
            Formula::exists(v("y"), Formula::rel("S", vec![tv("y")])),
        )
        .unwrap()];
        let theta = unify_formulae_in_context(&s, &lhs, &rhs, &id())
            .into_unifier()
            .expect("unifiable");
        let ra = apply_formula_in_context(&lhs[0], &theta);
        let rb = apply_formula_in_context(&rhs[0], &theta);
        assert_eq!(ra.ctx(), rb.ctx());
        assert!(alpha_equivalent(ra.formula(), rb.formula()));
    }

    #[test]
    fn fic_quantifier_sort_clash() {
        let mut s = sig();
        s.add_sort("B2").unwrap();
        let lhs = vec![FormulaInContext::new(
            Context::empty(),
            Formula::exists(v("x"), Formula::Top),
        )
        .unwrap()];
        let rhs = vec![FormulaInContext::new(
            Context::empty(),
            Formula::exists(Variable::new("x", "B2"), Formula::Top),
        )
        .unwrap()];
        assert_eq!(
            unify_formulae_in_context(&s, &lhs, &rhs, &id()),
            UnifyOutcome::NoUnifier(NoUnifyReason::QuantifierSortClash)
        );
    }

    // Seeded random soundness sweep; the acceptance suite scales this up.
    #[test]
    fn random_term_pairs_sound_when_unifiable() {
        use rand::{Rng, SeedableRng};
        let s = sig();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xCAFE);
        let vars = ["x", "y", "z", "w"];
        fn gen_term(rng: &mut impl Rng, vars: &[&str], depth: u32) -> Term {
            let pick = if depth == 0 { rng.gen_range(0..2) } else { rng.gen_range(0..6) };
            match pick {
                0 => Term::var(Variable::new(vars[rng.gen_range(0..vars.len())], "A")),
                1 => Term::app("c", vec![]),
                2 => Term::app("f", vec![gen_term(rng, vars, depth - 1)]),
                3 => Term::app("g", vec![gen_term(rng, vars, depth - 1)]),
                _ => Term::app(
                    "h",
                    vec![gen_term(rng, vars, depth - 1), gen_term(rng, vars, depth - 1)],
                ),
            }
        }
        let mut found = 0;
        for _ in 0..500 {
            let a = gen_term(&mut rng, &vars, 3);
            let b = gen_term(&mut rng, &vars, 3);
            if let UnifyOutcome::Unifier(theta) = unify_terms(&s, std::slice::from_ref(&a), std::slice::from_ref(&b), &id())
            {
                found += 1;
                assert_eq!(apply_term(&a, &theta), apply_term(&b, &theta));
                for (term, target) in theta.pairs() {
                    if !matches!(term, Term::Var(tv) if tv == target) {
                        assert!(!term.free_variables().contains(target));
                    }
                }
                // In-context run over canonical contexts: equal results,
                // one shared context.
                let ta = TermInContext::new(a.canonical_context(), a.clone()).unwrap();
                let tb = TermInContext::new(b.canonical_context(), b.clone()).unwrap();
                let theta2 = unify_terms_in_context(&s, std::slice::from_ref(&ta), std::slice::from_ref(&tb), &id())
                    .into_unifier()
                    .expect("bare unifiable implies in-context unifiable");
                assert_eq!(
                    apply_term_in_context(&ta, &theta2),
                    apply_term_in_context(&tb, &theta2)
                );
            }
        }
        assert!(found > 50, "want a healthy number of unifiable pairs, got {found}");
    }
}
