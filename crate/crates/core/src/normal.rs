//! Horn normal form and the sequent/formula/clause translations.
//!
//! A Horn sequent whose right side conjoins several atoms is provably
//! equivalent to the list of sequents concluding each atom separately;
//! `horn_normal_form` computes that list and `horn_theory_normal_form`
//! applies it across a theory, dropping duplicates.

use thiserror::Error;

use crate::syntax::{Context, Formula, Fragment, Sequent, Theory};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NormalFormError {
    #[error("sequent is {found}, not Horn: {sequent}")]
    NotHorn { sequent: String, found: Fragment },
    #[error("not an atomic formula or top: {0}")]
    NotAtomic(String),
    #[error("context does not cover the free variables: {0}")]
    NotSuitable(String),
    #[error("formula is not of the shape (forall ...) premise => conclusion: {0}")]
    ShapeMismatch(String),
    #[error("clause has no positive literal")]
    NoPositiveLiteral,
    #[error("clause has more than one positive literal")]
    MultiplePositiveLiterals,
}

/// A sequent `(p1 & ... & pn) |- [ctx] c` with every part atomic or top;
/// the empty premise list stands for a bare top on the left.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalHornSequent {
    premises: Vec<Formula>,
    ctx: Context,
    conclusion: Formula,
}

fn is_atomic_or_top(f: &Formula) -> bool {
    matches!(f, Formula::Rel(..) | Formula::Eq(..) | Formula::Top)
}

impl NormalHornSequent {
    pub fn new(
        premises: Vec<Formula>,
        ctx: Context,
        conclusion: Formula,
    ) -> Result<Self, NormalFormError> {
        for p in premises.iter().chain(std::iter::once(&conclusion)) {
            if !is_atomic_or_top(p) {
                return Err(NormalFormError::NotAtomic(p.to_string()));
            }
            if !ctx.suitable_for_formula(p) {
                return Err(NormalFormError::NotSuitable(p.to_string()));
            }
        }
        Ok(NormalHornSequent {
            premises,
            ctx,
            conclusion,
        })
    }

    pub fn premises(&self) -> &[Formula] {
        &self.premises
    }

    pub fn ctx(&self) -> &Context {
        &self.ctx
    }

    pub fn conclusion(&self) -> &Formula {
        &self.conclusion
    }

    /// Rebuilds the sequent, conjoining premises left-associatively; no
    /// premises become a bare top.
    pub fn to_sequent(&self) -> Sequent {
        Sequent::new(
            Formula::conj(self.premises.clone()),
            self.ctx.clone(),
            self.conclusion.clone(),
        )
        .expect("normal sequent parts are atomic and suitable")
    }
}

impl std::fmt::Display for NormalHornSequent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_sequent())
    }
}

/// All atomic subformulae (counting top and bottom), left to right,
/// duplicates preserved.
pub fn atomic_subformulae(phi: &Formula) -> Vec<Formula> {
    let mut out = Vec::new();
    collect_atomic(phi, &mut out);
    out
}

fn collect_atomic(phi: &Formula, out: &mut Vec<Formula>) {
    match phi {
        Formula::Top | Formula::Bot | Formula::Eq(..) | Formula::Rel(..) => out.push(phi.clone()),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            collect_atomic(a, out);
            collect_atomic(b, out);
        }
        Formula::Not(a) => collect_atomic(a, out),
        Formula::Exists(_, a) | Formula::Forall(_, a) => collect_atomic(a, out),
    }
}

/// As `atomic_subformulae` with duplicates removed, keeping first
/// occurrences. Equality is syntactic; atoms contain no binders, so this
/// coincides with alpha-equivalence.
pub fn unique_atomic_subformulae(phi: &Formula) -> Vec<Formula> {
    let mut out = Vec::new();
    for f in atomic_subformulae(phi) {
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

/// Flattens a conjunction tree into its conjuncts, left to right. A bare
/// top yields the empty list; a top inside a conjunction is kept.
pub fn flatten_conjunction(phi: &Formula) -> Vec<Formula> {
    if matches!(phi, Formula::Top) {
        return Vec::new();
    }
    let mut out = Vec::new();
    flatten_and(phi, &mut out);
    out
}

fn flatten_and(phi: &Formula, out: &mut Vec<Formula>) {
    match phi {
        Formula::And(a, b) => {
            flatten_and(a, out);
            flatten_and(b, out);
        }
        other => out.push(other.clone()),
    }
}

/// Splits a Horn sequent into one normal sequent per unique atomic
/// subformula of its right side, all sharing the left side and context.
pub fn horn_normal_form(sigma: &Sequent) -> Result<Vec<NormalHornSequent>, NormalFormError> {
    let found = sigma.classify();
    if found > Fragment::Horn {
        return Err(NormalFormError::NotHorn {
            sequent: sigma.to_string(),
            found,
        });
    }
    let premises = flatten_conjunction(sigma.lhs());
    unique_atomic_subformulae(sigma.rhs())
        .into_iter()
        .map(|atom| NormalHornSequent::new(premises.clone(), sigma.ctx().clone(), atom))
        .collect()
}

/// Normalizes every axiom and unions the results, dropping structural
/// duplicates. The result is idempotent under renormalization.
pub fn horn_theory_normal_form(theory: &Theory) -> Result<Theory, NormalFormError> {
    let mut out = Theory::new(theory.signature().clone());
    for (i, axiom) in theory.axioms().iter().enumerate() {
        let parts = horn_normal_form(axiom).map_err(|e| match e {
            NormalFormError::NotHorn { sequent, found } => NormalFormError::NotHorn {
                sequent: format!("axiom {}: {}", i + 1, sequent),
                found,
            },
            other => other,
        })?;
        for part in parts {
            out.add_axiom(part.to_sequent())
                .expect("normalized axiom stays well-formed");
        }
    }
    Ok(out)
}

/// Internalizes a sequent as the closed formula `(forall ctx) lhs => rhs`.
pub fn sequent_to_formula(sigma: &Sequent) -> Formula {
    let mut out = Formula::implies(sigma.lhs().clone(), sigma.rhs().clone());
    for v in sigma.ctx().iter().rev() {
        out = Formula::forall(v.clone(), out);
    }
    out
}

/// Reads a closed formula `(forall x1) ... (forall xn) a => b` back as the
/// sequent `a |- [x1..xn] b`.
pub fn formula_to_sequent(phi: &Formula) -> Result<Sequent, NormalFormError> {
    let mut binders = Vec::new();
    let mut body = phi;
    while let Formula::Forall(v, inner) = body {
        binders.push(v.clone());
        body = inner;
    }
    let (lhs, rhs) = match body {
        Formula::Implies(a, b) => ((**a).clone(), (**b).clone()),
        other => return Err(NormalFormError::ShapeMismatch(other.to_string())),
    };
    let ctx =
        Context::new(binders).map_err(|e| NormalFormError::ShapeMismatch(e.to_string()))?;
    Sequent::new(lhs, ctx, rhs).map_err(|e| NormalFormError::ShapeMismatch(e.to_string()))
}

/// Turns a Horn clause, given as literals with exactly one positive, into
/// the sequent conjoining the negated literals on the left.
pub fn horn_clause_to_sequent(
    literals: &[Formula],
    ctx: Context,
) -> Result<Sequent, NormalFormError> {
    let mut premises = Vec::new();
    let mut positive: Option<Formula> = None;
    for lit in literals {
        match lit {
            Formula::Not(inner) => {
                if !is_atomic_or_top(inner) && !matches!(**inner, Formula::Bot) {
                    return Err(NormalFormError::NotAtomic(inner.to_string()));
                }
                premises.push((**inner).clone());
            }
            atom => {
                if !is_atomic_or_top(atom) && !matches!(atom, Formula::Bot) {
                    return Err(NormalFormError::NotAtomic(atom.to_string()));
                }
                if positive.is_some() {
                    return Err(NormalFormError::MultiplePositiveLiterals);
                }
                positive = Some(atom.clone());
            }
        }
    }
    let conclusion = positive.ok_or(NormalFormError::NoPositiveLiteral)?;
    Sequent::new(Formula::conj(premises), ctx, conclusion)
        .map_err(|e| NormalFormError::NotSuitable(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{alpha_equivalent_sequents, Signature, Term, Variable};

    fn prop(n: &str) -> Formula {
        Formula::prop(n)
    }

    fn v(n: &str) -> Variable {
        Variable::new(n, "A")
    }

    fn sig() -> Signature {
        let mut s = Signature::new();
        s.add_sort("A").unwrap();
        for p in ["A", "B", "C", "D", "p1", "p2", "q1", "q2"] {
            s.add_proposition(p).unwrap();
        }
        s
    }

    #[test]
    fn atomic_subformulae_case_walk() {
        let f = Formula::or(
            Formula::and(prop("A"), prop("B")),
            Formula::not(prop("C")),
        );
        assert_eq!(atomic_subformulae(&f), vec![prop("A"), prop("B"), prop("C")]);
        let r = Formula::rel("R", vec![Term::var(v("x"))]);
        assert_eq!(atomic_subformulae(&r), vec![r.clone()]);
    }

    #[test]
    fn unique_preserves_first_occurrence_order() {
        let f = Formula::conj(vec![prop("p1"), prop("p2"), prop("p1")]);
        assert_eq!(
            atomic_subformulae(&f),
            vec![prop("p1"), prop("p2"), prop("p1")]
        );
        assert_eq!(unique_atomic_subformulae(&f), vec![prop("p1"), prop("p2")]);
    }

    // Independent oracle: enumerate every subformula node, keep the
    // leaves, compare against the single-pass collector.
    #[test]
    fn atomic_subformulae_matches_full_enumeration() {
        fn nodes(f: &Formula, out: &mut Vec<Formula>) {
            out.push(f.clone());
            match f {
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    nodes(a, out);
                    nodes(b, out);
                }
                Formula::Not(a) | Formula::Exists(_, a) | Formula::Forall(_, a) => nodes(a, out),
                _ => {}
            }
        }
        let samples = vec![
            Formula::implies(
                Formula::or(prop("A"), Formula::Bot),
                Formula::exists(v("x"), Formula::eq(Term::var(v("x")), Term::var(v("x")))),
            ),
            Formula::not(Formula::not(Formula::and(prop("B"), Formula::Top))),
            Formula::conj(vec![prop("p1"), prop("p2"), prop("p1"), prop("q1")]),
        ];
        for f in samples {
            let mut all = Vec::new();
            nodes(&f, &mut all);
            let leaves: Vec<Formula> = all
                .into_iter()
                .filter(|g| {
                    matches!(
                        g,
                        Formula::Top | Formula::Bot | Formula::Eq(..) | Formula::Rel(..)
                    )
                })
                .collect();
            // Preorder over this grammar visits leaves left to right, the
            // same order the collector emits.
            assert_eq!(atomic_subformulae(&f), leaves);
        }
    }

    #[test]
    fn horn_normal_form_splits_conjunction() {
        let lhs = Formula::and(prop("p1"), prop("p2"));
        let rhs = Formula::and(prop("q1"), prop("q2"));
        let sigma = Sequent::new(lhs.clone(), Context::empty(), rhs).unwrap();
        let parts = horn_normal_form(&sigma).unwrap();
        assert_eq!(parts.len(), 2);
        for (part, want) in parts.iter().zip([prop("q1"), prop("q2")]) {
            assert_eq!(part.premises(), &[prop("p1"), prop("p2")]);
            assert_eq!(part.ctx(), sigma.ctx());
            assert_eq!(part.conclusion(), &want);
            assert_eq!(part.to_sequent().lhs(), &lhs);
        }
    }

    #[test]
    fn horn_normal_form_atomic_and_top_cases() {
        let sigma = Sequent::new(prop("A"), Context::empty(), prop("B")).unwrap();
        let parts = horn_normal_form(&sigma).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].to_sequent(), sigma);

        let to_top = Sequent::new(prop("A"), Context::empty(), Formula::Top).unwrap();
        let parts = horn_normal_form(&to_top).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].conclusion(), &Formula::Top);
        assert_eq!(parts[0].premises(), [prop("A")]);
    }

    #[test]
    fn horn_normal_form_rejects_wider_fragments() {
        let sigma = Sequent::new(
            Formula::or(prop("A"), prop("B")),
            Context::empty(),
            prop("C"),
        )
        .unwrap();
        let err = horn_normal_form(&sigma).unwrap_err();
        assert!(matches!(
            err,
            NormalFormError::NotHorn {
                found: Fragment::Coherent,
                ..
            }
        ));
    }

    #[test]
    fn theory_normal_form_unions_and_deduplicates() {
        let bc = Formula::and(prop("B"), prop("C"));
        let mut t = Theory::new(sig());
        t.add_axiom(Sequent::new(prop("A"), Context::empty(), bc.clone()).unwrap())
            .unwrap();
        t.add_axiom(Sequent::new(prop("D"), Context::empty(), bc).unwrap())
            .unwrap();
        let n = horn_theory_normal_form(&t).unwrap();
        let want: Vec<Sequent> = [("A", "B"), ("A", "C"), ("D", "B"), ("D", "C")]
            .iter()
            .map(|(l, r)| Sequent::new(prop(l), Context::empty(), prop(r)).unwrap())
            .collect();
        assert_eq!(n.axioms(), &want[..]);

        let mut dup = Theory::new(sig());
        dup.add_axiom(Sequent::new(prop("A"), Context::empty(), prop("B")).unwrap())
            .unwrap();
        dup.add_axiom(
            Sequent::new(
                prop("A"),
                Context::empty(),
                Formula::and(prop("B"), prop("B")),
            )
            .unwrap(),
        )
        .unwrap();
        let n = horn_theory_normal_form(&dup).unwrap();
        assert_eq!(n.axioms().len(), 1);

        // Idempotent, and identity on already-normal theories.
        let again = horn_theory_normal_form(&n).unwrap();
        assert_eq!(again.axioms(), n.axioms());
    }

    #[test]
    fn sequent_formula_round_trip() {
        let mut s = sig();
        s.add_relation("R", vec!["A".into()]).unwrap();
        s.add_relation("S", vec!["A".into()]).unwrap();
        let rx = Formula::rel("R", vec![Term::var(v("x"))]);
        let sx = Formula::rel("S", vec![Term::var(v("x"))]);
        let sigma = Sequent::new(
            rx.clone(),
            Context::new(vec![v("x")]).unwrap(),
            sx.clone(),
        )
        .unwrap();
        let phi = sequent_to_formula(&sigma);
        assert_eq!(phi, Formula::forall(v("x"), Formula::implies(rx, sx)));
        assert!(phi.free_variables().is_empty());
        let back = formula_to_sequent(&phi).unwrap();
        assert!(alpha_equivalent_sequents(&back, &sigma));
    }

    #[test]
    fn formula_to_sequent_two_binders() {
        let ax = Formula::rel("A2", vec![Term::var(v("x"))]);
        let by = Formula::rel("B2", vec![Term::var(v("y"))]);
        let phi = Formula::forall(
            v("x"),
            Formula::forall(v("y"), Formula::implies(ax.clone(), by.clone())),
        );
        let sigma = formula_to_sequent(&phi).unwrap();
        assert_eq!(sigma.lhs(), &ax);
        assert_eq!(sigma.rhs(), &by);
        assert_eq!(sigma.ctx(), &Context::new(vec![v("x"), v("y")]).unwrap());
        assert_eq!(sequent_to_formula(&sigma), phi);
    }

    #[test]
    fn formula_to_sequent_shape_errors() {
        assert!(matches!(
            formula_to_sequent(&prop("A")),
            Err(NormalFormError::ShapeMismatch(_))
        ));
        let not_closed = Formula::implies(
            Formula::rel("R", vec![Term::var(v("x"))]),
            Formula::Top,
        );
        assert!(matches!(
            formula_to_sequent(&not_closed),
            Err(NormalFormError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn clause_translation() {
        let lits = vec![Formula::not(prop("A")), Formula::not(prop("B")), prop("C")];
        let sigma = horn_clause_to_sequent(&lits, Context::empty()).unwrap();
        assert_eq!(
            sigma,
            Sequent::new(
                Formula::and(prop("A"), prop("B")),
                Context::empty(),
                prop("C")
            )
            .unwrap()
        );

        let unit = horn_clause_to_sequent(&[prop("C")], Context::empty()).unwrap();
        assert_eq!(unit.lhs(), &Formula::Top);
        assert_eq!(unit.rhs(), &prop("C"));

        assert_eq!(
            horn_clause_to_sequent(
                &[Formula::not(prop("A")), Formula::not(prop("B"))],
                Context::empty()
            ),
            Err(NormalFormError::NoPositiveLiteral)
        );
        assert_eq!(
            horn_clause_to_sequent(&[prop("A"), prop("B")], Context::empty()),
            Err(NormalFormError::MultiplePositiveLiterals)
        );
    }
}
