//! Simultaneous capture-avoiding substitution.
//!
//! A substitution `[s1, ..., sn / y1, ..., yn]` replaces each target
//! variable `yi` by the term `si`, all at once. Application to a formula
//! renames every bound variable it passes under, drawing fresh names from
//! a deterministic source, so capture is impossible by construction.
//!
//! Invariants:
//!   - targets are pairwise distinct
//!   - each replacement term has the sort of its target (checked fully
//!     against a signature via `new_checked`, structurally otherwise)

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::syntax::{
    canonical_context_of_terms, Context, Formula, FormulaInContext, Signature, SortName, Term,
    TermInContext, Variable,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubstError {
    #[error("duplicate substitution target {0}")]
    DuplicateTarget(Variable),
    #[error("term {term} has sort {found}, target {target} expects {expected}")]
    SortMismatch {
        term: String,
        target: Variable,
        expected: SortName,
        found: SortName,
    },
    #[error("ill-sorted replacement term: {0}")]
    IllSorted(String),
}

/// A simultaneous substitution, kept as an ordered list of
/// (replacement term, target variable) pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Substitution {
    pairs: Vec<(Term, Variable)>,
}

impl Substitution {
    /// The empty substitution.
    pub fn identity() -> Substitution {
        Substitution { pairs: Vec::new() }
    }

    /// Builds a substitution, checking target distinctness. Sort agreement
    /// is checked structurally (variable-for-variable pairs only); use
    /// `new_checked` to verify application terms against a signature.
    pub fn new(pairs: Vec<(Term, Variable)>) -> Result<Substitution, SubstError> {
        let mut seen = BTreeSet::new();
        for (term, target) in &pairs {
            if !seen.insert(target.clone()) {
                return Err(SubstError::DuplicateTarget(target.clone()));
            }
            if let Term::Var(v) = term {
                if v.sort() != target.sort() {
                    return Err(SubstError::SortMismatch {
                        term: term.to_string(),
                        target: target.clone(),
                        expected: target.sort().clone(),
                        found: v.sort().clone(),
                    });
                }
            }
        }
        Ok(Substitution { pairs })
    }

    /// Builds a substitution and verifies every pair's sorts against `sig`.
    pub fn new_checked(
        pairs: Vec<(Term, Variable)>,
        sig: &Signature,
    ) -> Result<Substitution, SubstError> {
        for (term, target) in &pairs {
            let found = sig
                .sort_of(term)
                .map_err(|e| SubstError::IllSorted(e.to_string()))?;
            if &found != target.sort() {
                return Err(SubstError::SortMismatch {
                    term: term.to_string(),
                    target: target.clone(),
                    expected: target.sort().clone(),
                    found,
                });
            }
        }
        Substitution::new(pairs)
    }

    /// Single-pair substitution `[term / target]`.
    pub fn single(term: Term, target: Variable) -> Result<Substitution, SubstError> {
        Substitution::new(vec![(term, target)])
    }

    /// Variable renaming `[new / old]`, requiring matching sorts.
    pub fn rename(old: Variable, new: Variable) -> Result<Substitution, SubstError> {
        Substitution::new(vec![(Term::var(new), old)])
    }

    pub fn pairs(&self) -> &[(Term, Variable)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn targets(&self) -> impl Iterator<Item = &Variable> {
        self.pairs.iter().map(|(_, y)| y)
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.pairs.iter().map(|(t, _)| t)
    }

    pub fn lookup(&self, v: &Variable) -> Option<&Term> {
        self.pairs
            .iter()
            .find(|(_, target)| target == v)
            .map(|(term, _)| term)
    }

    pub fn is_target(&self, v: &Variable) -> bool {
        self.lookup(v).is_some()
    }

    /// True for every pair of the shape `[y / y]`.
    pub fn is_renaming_identity(&self) -> bool {
        self.pairs
            .iter()
            .all(|(term, target)| matches!(term, Term::Var(v) if v == target))
    }

    /// Every variable occurring in the substitution: targets plus the free
    /// variables of every replacement term.
    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        for (term, target) in &self.pairs {
            out.insert(target.clone());
            out.extend(term.free_variables());
        }
        out
    }

    /// Extension by a context: appends an identity pair `z / z` for every
    /// variable of `ctx` that is not already a target, in context order.
    pub fn extend(&self, ctx: &Context) -> Substitution {
        let mut pairs = self.pairs.clone();
        for z in ctx.iter() {
            if !self.is_target(z) {
                pairs.push((Term::var(z.clone()), z.clone()));
            }
        }
        Substitution { pairs }
    }

    /// Sequential composition: applying the result equals applying `self`
    /// then `after`, i.e. `t (self.compose(after)) = (t self) after` for
    /// every term `t`.
    pub fn compose(&self, after: &Substitution) -> Substitution {
        let mut pairs: Vec<(Term, Variable)> = self
            .pairs
            .iter()
            .map(|(term, target)| (apply_term(term, after), target.clone()))
            .collect();
        for (term, target) in &after.pairs {
            if !self.is_target(target) {
                pairs.push((term.clone(), target.clone()));
            }
        }
        Substitution { pairs }
    }
}

/// Renders `[s1, s2 / y1, y2]`, hiding identity pairs. A substitution
/// with no visible pairs renders as `[]`.
impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let visible: Vec<&(Term, Variable)> = self
            .pairs
            .iter()
            .filter(|(term, target)| !matches!(term, Term::Var(v) if v == target))
            .collect();
        write!(f, "[")?;
        for (i, (term, _)) in visible.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{term}")?;
        }
        if !visible.is_empty() {
            write!(f, " / ")?;
            for (i, (_, target)) in visible.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", target.name())?;
            }
        }
        write!(f, "]")
    }
}

/// Deterministic supply of fresh variable names. Generated names have the
/// shape `<base>_<n>` with the smallest `n >= 1` whose name is not in the
/// avoid set; a numeric suffix on the base is stripped first, so renaming
/// `x_1` tries `x_2`, not `x_1_1`. Generated names join the avoid set.
#[derive(Clone, Debug)]
pub struct FreshVariableSource {
    avoid: BTreeSet<String>,
    counters: BTreeMap<String, u64>,
}

impl FreshVariableSource {
    pub fn new() -> FreshVariableSource {
        FreshVariableSource {
            avoid: BTreeSet::new(),
            counters: BTreeMap::new(),
        }
    }

    pub fn avoiding<'a, I: IntoIterator<Item = &'a Variable>>(vars: I) -> FreshVariableSource {
        let mut src = FreshVariableSource::new();
        for v in vars {
            src.avoid_name(v.name());
        }
        src
    }

    pub fn avoid_name(&mut self, name: &str) {
        self.avoid.insert(name.to_string());
    }

    pub fn avoid_variable(&mut self, v: &Variable) {
        self.avoid_name(v.name());
    }

    fn root(base: &str) -> &str {
        match base.rfind('_') {
            Some(i) if i > 0 && base[i + 1..].chars().all(|c| c.is_ascii_digit()) && i + 1 < base.len() => {
                &base[..i]
            }
            _ => base,
        }
    }

    pub fn fresh(&mut self, base: &str, sort: &SortName) -> Variable {
        let root = FreshVariableSource::root(base).to_string();
        let mut n = *self.counters.get(&root).unwrap_or(&1);
        loop {
            let candidate = format!("{root}_{n}");
            if !self.avoid.contains(&candidate) {
                self.avoid.insert(candidate.clone());
                self.counters.insert(root, n + 1);
                return Variable::new(candidate, sort.clone());
            }
            n += 1;
        }
    }

    pub fn fresh_like(&mut self, v: &Variable) -> Variable {
        self.fresh(v.name(), v.sort())
    }
}

impl Default for FreshVariableSource {
    fn default() -> FreshVariableSource {
        FreshVariableSource::new()
    }
}

/// Applies a substitution to a term. Variables that are not targets are
/// left unchanged, so application is total.
pub fn apply_term(t: &Term, theta: &Substitution) -> Term {
    match t {
        Term::Var(v) => theta.lookup(v).cloned().unwrap_or_else(|| t.clone()),
        Term::App(f, args) => Term::App(
            f.clone(),
            args.iter().map(|a| apply_term(a, theta)).collect(),
        ),
    }
}

/// Applies a substitution to a term in context. The substitution is first
/// extended by the context, and the result context is the canonical
/// context of the extension's replacement terms in pair order.
pub fn apply_term_in_context(tic: &TermInContext, theta: &Substitution) -> TermInContext {
    let ext = theta.extend(tic.ctx());
    let terms: Vec<Term> = ext.terms().cloned().collect();
    let ctx = canonical_context_of_terms(&terms);
    let term = apply_term(tic.term(), &ext);
    TermInContext::new(ctx, term).expect("substitution preserves suitability")
}

/// Applies a substitution to a formula, renaming every bound variable via
/// a canonical fresh source (avoiding all variables of the formula and of
/// the substitution). Deterministic: recomputing the application yields a
/// syntactically identical result.
pub fn apply_formula(phi: &Formula, theta: &Substitution) -> Formula {
    let mut avoid = phi.all_variables();
    avoid.extend(theta.variables());
    let mut src = FreshVariableSource::avoiding(avoid.iter());
    apply_formula_with(phi, theta, &mut src)
}

/// As `apply_formula`, but drawing bound-variable renames from the given
/// source. Callers that need reproducible output must seed the source
/// the same way `apply_formula` does.
pub fn apply_formula_with(
    phi: &Formula,
    theta: &Substitution,
    src: &mut FreshVariableSource,
) -> Formula {
    match phi {
        Formula::Rel(r, args) => Formula::Rel(
            r.clone(),
            args.iter().map(|a| apply_term(a, theta)).collect(),
        ),
        Formula::Eq(s, t) => Formula::Eq(apply_term(s, theta), apply_term(t, theta)),
        Formula::Top => Formula::Top,
        Formula::Bot => Formula::Bot,
        Formula::And(a, b) => Formula::and(
            apply_formula_with(a, theta, src),
            apply_formula_with(b, theta, src),
        ),
        Formula::Or(a, b) => Formula::or(
            apply_formula_with(a, theta, src),
            apply_formula_with(b, theta, src),
        ),
        Formula::Implies(a, b) => Formula::implies(
            apply_formula_with(a, theta, src),
            apply_formula_with(b, theta, src),
        ),
        Formula::Not(a) => Formula::not(apply_formula_with(a, theta, src)),
        Formula::Exists(u, body) => {
            let (u2, body2) = push_under_binder(u, body, theta, src);
            Formula::Exists(u2, Box::new(body2))
        }
        Formula::Forall(u, body) => {
            let (u2, body2) = push_under_binder(u, body, theta, src);
            Formula::Forall(u2, Box::new(body2))
        }
    }
}

// Quantifier case: unconditionally rename the binder to a fresh variable,
// rename the body, then apply the substitution to the renamed body.
fn push_under_binder(
    u: &Variable,
    body: &Formula,
    theta: &Substitution,
    src: &mut FreshVariableSource,
) -> (Variable, Formula) {
    let u2 = src.fresh_like(u);
    let rename =
        Substitution::rename(u.clone(), u2.clone()).expect("fresh variable keeps the sort");
    let renamed = apply_formula_with(body, &rename, src);
    (u2, apply_formula_with(&renamed, theta, src))
}

/// Applies a substitution to a formula in context, mirroring
/// `apply_term_in_context` for the context part.
pub fn apply_formula_in_context(
    fic: &FormulaInContext,
    theta: &Substitution,
) -> FormulaInContext {
    let ext = theta.extend(fic.ctx());
    let terms: Vec<Term> = ext.terms().cloned().collect();
    let ctx = canonical_context_of_terms(&terms);
    let mut avoid = fic.formula().all_variables();
    avoid.extend(ext.variables());
    for z in fic.ctx().iter() {
        avoid.insert(z.clone());
    }
    let mut src = FreshVariableSource::avoiding(avoid.iter());
    let formula = apply_formula_with(fic.formula(), &ext, &mut src);
    FormulaInContext::new(ctx, formula).expect("substitution preserves suitability")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Variable {
        Variable::new(n, "A")
    }

    fn tv(n: &str) -> Term {
        Term::var(v(n))
    }

    fn sub(pairs: Vec<(Term, Variable)>) -> Substitution {
        Substitution::new(pairs).unwrap()
    }

    #[test]
    fn simultaneous_not_sequential() {
        // f(x, y)[x, z / y, x] swaps in one pass: f(z, x).
        let t = Term::app("f", vec![tv("x"), tv("y")]);
        let theta = sub(vec![(tv("x"), v("y")), (tv("z"), v("x"))]);
        assert_eq!(apply_term(&t, &theta), Term::app("f", vec![tv("z"), tv("x")]));
    }

    #[test]
    fn non_target_variables_unchanged() {
        let t = Term::app("f", vec![tv("x"), tv("w")]);
        let theta = sub(vec![(Term::app("g", vec![tv("z")]), v("x"))]);
        assert_eq!(
            apply_term(&t, &theta),
            Term::app("f", vec![Term::app("g", vec![tv("z")]), tv("w")])
        );
    }

    #[test]
    fn duplicate_targets_rejected() {
        let err = Substitution::new(vec![(tv("a"), v("x")), (tv("b"), v("x"))]).unwrap_err();
        assert_eq!(err, SubstError::DuplicateTarget(v("x")));
    }

    #[test]
    fn variable_pair_sort_mismatch_rejected() {
        let err = Substitution::new(vec![(Term::var(Variable::new("b", "B")), v("x"))]);
        assert!(matches!(err, Err(SubstError::SortMismatch { .. })));
    }

    #[test]
    fn term_in_context_tracks_canonical_context() {
        // (x, y . f(x))[g(z), w / x, w]  =  z, w, y . f(g(z))
        let tic = TermInContext::new(
            Context::new(vec![v("x"), v("y")]).unwrap(),
            Term::app("f", vec![tv("x")]),
        )
        .unwrap();
        let theta = sub(vec![
            (Term::app("g", vec![tv("z")]), v("x")),
            (tv("w"), v("w")),
        ]);
        let out = apply_term_in_context(&tic, &theta);
        assert_eq!(
            out.ctx(),
            &Context::new(vec![v("z"), v("w"), v("y")]).unwrap()
        );
        assert_eq!(out.term(), &Term::app("f", vec![Term::app("g", vec![tv("z")])]));
    }

    #[test]
    fn quantifier_case_avoids_capture() {
        // ((exists x) R(x, y))[x / y]  =  (exists x_1) R(x_1, x)
        let phi = Formula::exists(v("x"), Formula::rel("R", vec![tv("x"), tv("y")]));
        let theta = sub(vec![(tv("x"), v("y"))]);
        let out = apply_formula(&phi, &theta);
        assert_eq!(
            out,
            Formula::exists(v("x_1"), Formula::rel("R", vec![tv("x_1"), tv("x")]))
        );
    }

    #[test]
    fn binder_renamed_even_without_capture_risk() {
        let phi = Formula::exists(v("u"), Formula::rel("R", vec![tv("u")]));
        let out = apply_formula(&phi, &Substitution::identity());
        assert_eq!(
            out,
            Formula::exists(v("u_1"), Formula::rel("R", vec![tv("u_1")]))
        );
    }

    #[test]
    fn formula_in_context_example() {
        // (y, z, w . (exists x) R(x, y, z))[f(x) / y]
        //   =  x, z, w . (exists x_1) R(x_1, f(x), z)
        let fic = FormulaInContext::new(
            Context::new(vec![v("y"), v("z"), v("w")]).unwrap(),
            Formula::exists(v("x"), Formula::rel("R", vec![tv("x"), tv("y"), tv("z")])),
        )
        .unwrap();
        let theta = sub(vec![(Term::app("f", vec![tv("x")]), v("y"))]);
        let out = apply_formula_in_context(&fic, &theta);
        assert_eq!(
            out.ctx(),
            &Context::new(vec![v("x"), v("z"), v("w")]).unwrap()
        );
        assert_eq!(
            out.formula(),
            &Formula::exists(
                v("x_1"),
                Formula::rel("R", vec![tv("x_1"), Term::app("f", vec![tv("x")]), tv("z")])
            )
        );
    }

    #[test]
    fn extension_appends_missing_identities_in_order() {
        let theta = sub(vec![(Term::app("g", vec![tv("z")]), v("x"))]);
        let ctx = Context::new(vec![v("x"), v("y"), v("w")]).unwrap();
        let ext = theta.extend(&ctx);
        let targets: Vec<&Variable> = ext.targets().collect();
        assert_eq!(targets, vec![&v("x"), &v("y"), &v("w")]);
        assert!(ext.lookup(&v("y")) == Some(&tv("y")));
    }

    #[test]
    fn compose_agrees_with_sequential_application() {
        let theta = sub(vec![(Term::app("g", vec![tv("z")]), v("x"))]);
        let rho = sub(vec![(Term::app("h", vec![]), v("z")), (tv("x"), v("w"))]);
        let composed = theta.compose(&rho);
        for t in [
            tv("x"),
            tv("z"),
            tv("w"),
            Term::app("f", vec![tv("x"), tv("w"), tv("q")]),
        ] {
            assert_eq!(
                apply_term(&apply_term(&t, &theta), &rho),
                apply_term(&t, &composed)
            );
        }
    }

    #[test]
    fn display_hides_identity_pairs() {
        let theta = sub(vec![(tv("y"), v("y")), (tv("x_3"), v("x_1"))]);
        assert_eq!(theta.to_string(), "[x_3 / x_1]");
        let all_id = sub(vec![(tv("y"), v("y"))]);
        assert_eq!(all_id.to_string(), "[]");
    }

    #[test]
    fn fresh_names_strip_numeric_suffix_and_skip_collisions() {
        let mut src = FreshVariableSource::avoiding([v("x"), v("x_1"), v("x_2")].iter());
        assert_eq!(src.fresh("x_1", &"A".into()).name(), "x_3");
        assert_eq!(src.fresh("x", &"A".into()).name(), "x_4");
        assert_eq!(src.fresh("y", &"A".into()).name(), "y_1");
    }
}
