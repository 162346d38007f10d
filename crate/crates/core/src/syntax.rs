//! Core syntax: signatures, variables, terms, formulae, contexts, sequents,
//! theories, and fragment classification.
//!
//! A variable is identified by name *and* sort; `x:A` and `x:B` are distinct.
//! A context is an ordered list of distinct variables. An expression is
//! placed in context by pairing it with a context that contains (at least)
//! its free variables.

use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Name of a sort declared in a signature.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SortName(String);

impl SortName {
    pub fn new(name: impl Into<String>) -> Self {
        SortName(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SortName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SortName {
    fn from(s: &str) -> Self {
        SortName(s.to_owned())
    }
}

/// A typed variable. Equality compares both the name and the sort.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable {
    name: String,
    sort: SortName,
}

impl Variable {
    pub fn new(name: impl Into<String>, sort: impl Into<SortName>) -> Self {
        Variable {
            name: name.into(),
            sort: sort.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sort(&self) -> &SortName {
        &self.sort
    }
}

impl From<String> for SortName {
    fn from(s: String) -> Self {
        SortName(s)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.sort)
    }
}

/// Typed function symbol; constants are the zero-argument case.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub arg_types: Vec<SortName>,
    pub result: SortName,
}

/// Typed relation symbol; propositions are the zero-argument case.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationDecl {
    pub name: String,
    pub arg_types: Vec<SortName>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("sort `{0}` is already declared")]
    DuplicateSort(SortName),
    #[error("function symbol `{0}` is already declared")]
    DuplicateFunction(String),
    #[error("relation symbol `{0}` is already declared")]
    DuplicateRelation(String),
    #[error("declaration of `{symbol}` mentions unknown sort `{sort}`")]
    UnknownSort { symbol: String, sort: SortName },
}

/// A multi-sorted signature: sorts plus typed function and relation symbols.
/// Declaration order is preserved; it is the tie-breaking order used by
/// closed-term search.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    sorts: Vec<SortName>,
    functions: Vec<FunctionDecl>,
    relations: Vec<RelationDecl>,
}

impl Signature {
    pub fn new() -> Self {
        Signature::default()
    }

    pub fn add_sort(&mut self, sort: impl Into<SortName>) -> Result<(), SignatureError> {
        let sort = sort.into();
        if self.sorts.contains(&sort) {
            return Err(SignatureError::DuplicateSort(sort));
        }
        self.sorts.push(sort);
        Ok(())
    }

    pub fn add_function(
        &mut self,
        name: impl Into<String>,
        arg_types: Vec<SortName>,
        result: impl Into<SortName>,
    ) -> Result<(), SignatureError> {
        let name = name.into();
        let result = result.into();
        if self.function(&name).is_some() {
            return Err(SignatureError::DuplicateFunction(name));
        }
        for sort in arg_types.iter().chain(std::iter::once(&result)) {
            if !self.has_sort(sort) {
                return Err(SignatureError::UnknownSort {
                    symbol: name,
                    sort: sort.clone(),
                });
            }
        }
        self.functions.push(FunctionDecl {
            name,
            arg_types,
            result,
        });
        Ok(())
    }

    /// Constants are zero-argument functions.
    pub fn add_constant(
        &mut self,
        name: impl Into<String>,
        sort: impl Into<SortName>,
    ) -> Result<(), SignatureError> {
        self.add_function(name, Vec::new(), sort)
    }

    pub fn add_relation(
        &mut self,
        name: impl Into<String>,
        arg_types: Vec<SortName>,
    ) -> Result<(), SignatureError> {
        let name = name.into();
        if self.relation(&name).is_some() {
            return Err(SignatureError::DuplicateRelation(name));
        }
        for sort in &arg_types {
            if !self.has_sort(sort) {
                return Err(SignatureError::UnknownSort {
                    symbol: name,
                    sort: sort.clone(),
                });
            }
        }
        self.relations.push(RelationDecl { name, arg_types });
        Ok(())
    }

    /// Propositions are zero-argument relations.
    pub fn add_proposition(&mut self, name: impl Into<String>) -> Result<(), SignatureError> {
        self.add_relation(name, Vec::new())
    }

    pub fn sorts(&self) -> &[SortName] {
        &self.sorts
    }

    pub fn functions(&self) -> &[FunctionDecl] {
        &self.functions
    }

    pub fn relations(&self) -> &[RelationDecl] {
        &self.relations
    }

    pub fn has_sort(&self, sort: &SortName) -> bool {
        self.sorts.contains(sort)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDecl> {
        self.relations.iter().find(|r| r.name == name)
    }

    /// Sort of a term, checking arities and argument sorts along the way.
    pub fn sort_of(&self, term: &Term) -> Result<SortName, SortError> {
        match term {
            Term::Var(v) => {
                if self.has_sort(v.sort()) {
                    Ok(v.sort().clone())
                } else {
                    Err(SortError::UnknownSymbol {
                        name: v.sort().to_string(),
                        at: term.to_string(),
                    })
                }
            }
            Term::App(f, args) => {
                let decl = self.function(f).ok_or_else(|| SortError::UnknownSymbol {
                    name: f.clone(),
                    at: term.to_string(),
                })?;
                if decl.arg_types.len() != args.len() {
                    return Err(SortError::ArityMismatch {
                        name: f.clone(),
                        expected: decl.arg_types.len(),
                        found: args.len(),
                        at: term.to_string(),
                    });
                }
                for (arg, expected) in args.iter().zip(&decl.arg_types) {
                    let found = self.sort_of(arg)?;
                    if &found != expected {
                        return Err(SortError::SortMismatch {
                            expected: expected.clone(),
                            found,
                            at: arg.to_string(),
                        });
                    }
                }
                Ok(decl.result.clone())
            }
        }
    }

    /// Well-formedness of a formula over this signature.
    pub fn check_formula(&self, formula: &Formula) -> Result<(), SortError> {
        match formula {
            Formula::Rel(r, args) => {
                let decl = self.relation(r).ok_or_else(|| SortError::UnknownSymbol {
                    name: r.clone(),
                    at: formula.to_string(),
                })?;
                if decl.arg_types.len() != args.len() {
                    return Err(SortError::ArityMismatch {
                        name: r.clone(),
                        expected: decl.arg_types.len(),
                        found: args.len(),
                        at: formula.to_string(),
                    });
                }
                for (arg, expected) in args.iter().zip(&decl.arg_types) {
                    let found = self.sort_of(arg)?;
                    if &found != expected {
                        return Err(SortError::SortMismatch {
                            expected: expected.clone(),
                            found,
                            at: arg.to_string(),
                        });
                    }
                }
                Ok(())
            }
            Formula::Eq(s, t) => {
                let ls = self.sort_of(s)?;
                let rs = self.sort_of(t)?;
                if ls != rs {
                    return Err(SortError::SortMismatch {
                        expected: ls,
                        found: rs,
                        at: formula.to_string(),
                    });
                }
                Ok(())
            }
            Formula::Top | Formula::Bot => Ok(()),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                self.check_formula(a)?;
                self.check_formula(b)
            }
            Formula::Not(a) => self.check_formula(a),
            Formula::Exists(v, body) | Formula::Forall(v, body) => {
                if !self.has_sort(v.sort()) {
                    return Err(SortError::UnknownSymbol {
                        name: v.sort().to_string(),
                        at: formula.to_string(),
                    });
                }
                self.check_formula(body)
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SortError {
    #[error("unknown symbol `{name}` in `{at}`")]
    UnknownSymbol { name: String, at: String },
    #[error("`{name}` expects {expected} arguments but got {found} in `{at}`")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
        at: String,
    },
    #[error("expected sort `{expected}` but found `{found}` at `{at}`")]
    SortMismatch {
        expected: SortName,
        found: SortName,
        at: String,
    },
}

/// First-order term: a variable or a function symbol applied to arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Variable),
    App(String, Vec<Term>),
}

impl Term {
    pub fn var(v: Variable) -> Self {
        Term::Var(v)
    }

    pub fn app(name: impl Into<String>, args: Vec<Term>) -> Self {
        Term::App(name.into(), args)
    }

    pub fn constant(name: impl Into<String>) -> Self {
        Term::App(name.into(), Vec::new())
    }

    fn visit_free(&self, bound: &mut Vec<Variable>, f: &mut dyn FnMut(&Variable)) {
        match self {
            Term::Var(v) => {
                if !bound.contains(v) {
                    f(v);
                }
            }
            Term::App(_, args) => {
                for arg in args {
                    arg.visit_free(bound, f);
                }
            }
        }
    }

    pub fn free_variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.visit_free(&mut Vec::new(), &mut |v| {
            out.insert(v.clone());
        });
        out
    }

    /// Context of free variables in order of first occurrence.
    pub fn canonical_context(&self) -> Context {
        canonical_context_of(|f| self.visit_free(&mut Vec::new(), f))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::print::term_to_string(self))
    }
}

/// First-order formula over the full intuitionistic connective set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Rel(String, Vec<Term>),
    Eq(Term, Term),
    Top,
    Bot,
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    Exists(Variable, Box<Formula>),
    Forall(Variable, Box<Formula>),
}

impl Formula {
    pub fn rel(name: impl Into<String>, args: Vec<Term>) -> Self {
        Formula::Rel(name.into(), args)
    }

    pub fn prop(name: impl Into<String>) -> Self {
        Formula::Rel(name.into(), Vec::new())
    }

    pub fn eq(s: Term, t: Term) -> Self {
        Formula::Eq(s, t)
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Self {
        Formula::Not(Box::new(a))
    }

    pub fn exists(v: Variable, body: Formula) -> Self {
        Formula::Exists(v, Box::new(body))
    }

    pub fn forall(v: Variable, body: Formula) -> Self {
        Formula::Forall(v, Box::new(body))
    }

    /// Left-associated conjunction of a non-empty list; `Top` for the empty
    /// list.
    pub fn conj(mut parts: Vec<Formula>) -> Self {
        if parts.is_empty() {
            return Formula::Top;
        }
        let mut acc = parts.remove(0);
        for part in parts {
            acc = Formula::and(acc, part);
        }
        acc
    }

    fn visit_free(&self, bound: &mut Vec<Variable>, f: &mut dyn FnMut(&Variable)) {
        match self {
            Formula::Rel(_, args) => {
                for arg in args {
                    arg.visit_free(bound, f);
                }
            }
            Formula::Eq(s, t) => {
                s.visit_free(bound, f);
                t.visit_free(bound, f);
            }
            Formula::Top | Formula::Bot => {}
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.visit_free(bound, f);
                b.visit_free(bound, f);
            }
            Formula::Not(a) => a.visit_free(bound, f),
            Formula::Exists(v, body) | Formula::Forall(v, body) => {
                bound.push(v.clone());
                body.visit_free(bound, f);
                bound.pop();
            }
        }
    }

    pub fn free_variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.visit_free(&mut Vec::new(), &mut |v| {
            out.insert(v.clone());
        });
        out
    }

    pub fn bound_variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.visit_all_bound(&mut |v| {
            out.insert(v.clone());
        });
        out
    }

    fn visit_all_bound(&self, f: &mut dyn FnMut(&Variable)) {
        match self {
            Formula::Rel(..) | Formula::Eq(..) | Formula::Top | Formula::Bot => {}
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.visit_all_bound(f);
                b.visit_all_bound(f);
            }
            Formula::Not(a) => a.visit_all_bound(f),
            Formula::Exists(v, body) | Formula::Forall(v, body) => {
                f(v);
                body.visit_all_bound(f);
            }
        }
    }

    /// All variables occurring anywhere, free or bound.
    pub fn all_variables(&self) -> BTreeSet<Variable> {
        let mut out = self.free_variables();
        out.extend(self.bound_variables());
        out
    }

    /// Context of free variables in order of first occurrence.
    pub fn canonical_context(&self) -> Context {
        canonical_context_of(|f| self.visit_free(&mut Vec::new(), f))
    }

    /// True when no variable occurs both bound and free within this formula.
    pub fn bound_free_separated(&self) -> bool {
        let free = self.free_variables();
        self.bound_variables().is_disjoint(&free)
    }

    /// Least fragment admitting every connective present.
    pub fn classify(&self) -> Fragment {
        match self {
            Formula::Rel(..) | Formula::Eq(..) => Fragment::Atomic,
            Formula::Top => Fragment::Horn,
            Formula::Bot => Fragment::Coherent,
            Formula::And(a, b) => Fragment::Horn.max(a.classify()).max(b.classify()),
            Formula::Or(a, b) => Fragment::Coherent.max(a.classify()).max(b.classify()),
            Formula::Implies(a, b) => Fragment::Intuitionistic
                .max(a.classify())
                .max(b.classify()),
            Formula::Not(a) => Fragment::Intuitionistic.max(a.classify()),
            Formula::Exists(_, body) => Fragment::Regular.max(body.classify()),
            Formula::Forall(_, body) => Fragment::Intuitionistic.max(body.classify()),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::print::formula_to_string(self))
    }
}

fn canonical_context_of(visit: impl Fn(&mut dyn FnMut(&Variable))) -> Context {
    let mut vars: Vec<Variable> = Vec::new();
    visit(&mut |v| {
        if !vars.contains(v) {
            vars.push(v.clone());
        }
    });
    Context(vars)
}

/// Context of free variables of a term list, in order of first occurrence
/// across the whole list.
pub fn canonical_context_of_terms(terms: &[Term]) -> Context {
    canonical_context_of(|f| {
        for t in terms {
            t.visit_free(&mut Vec::new(), f);
        }
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("duplicate variable `{0}` in context")]
    DuplicateVariable(String),
}

/// An ordered list of distinct variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Context(Vec<Variable>);

impl Context {
    pub fn empty() -> Self {
        Context(Vec::new())
    }

    pub fn new(vars: Vec<Variable>) -> Result<Self, ContextError> {
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(ContextError::DuplicateVariable(v.to_string()));
            }
        }
        Ok(Context(vars))
    }

    pub fn singleton(v: Variable) -> Self {
        Context(vec![v])
    }

    pub fn vars(&self) -> &[Variable] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: &Variable) -> bool {
        self.0.contains(v)
    }

    pub fn position(&self, v: &Variable) -> Option<usize> {
        self.0.iter().position(|x| x == v)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Variable> {
        self.0.iter()
    }

    /// Left-first concatenation dropping duplicates: x⃗ followed by the
    /// variables of y⃗ not already present.
    pub fn concat(&self, other: &Context) -> Context {
        let mut vars = self.0.clone();
        for v in &other.0 {
            if !vars.contains(v) {
                vars.push(v.clone());
            }
        }
        Context(vars)
    }

    /// Append one variable; errors if already present.
    pub fn extended(&self, v: Variable) -> Result<Context, ContextError> {
        if self.contains(&v) {
            return Err(ContextError::DuplicateVariable(v.to_string()));
        }
        let mut vars = self.0.clone();
        vars.push(v);
        Ok(Context(vars))
    }

    /// Context without the given variable.
    pub fn without(&self, v: &Variable) -> Context {
        Context(self.0.iter().filter(|x| *x != v).cloned().collect())
    }

    /// A context is suitable for an expression when it contains every free
    /// variable of the expression.
    pub fn suitable_for(&self, free: &BTreeSet<Variable>) -> bool {
        free.iter().all(|v| self.contains(v))
    }

    pub fn suitable_for_formula(&self, formula: &Formula) -> bool {
        self.suitable_for(&formula.free_variables())
    }

    pub fn suitable_for_term(&self, term: &Term) -> bool {
        self.suitable_for(&term.free_variables())
    }

    /// The type of a context: its list of sorts.
    pub fn types(&self) -> Vec<SortName> {
        self.0.iter().map(|v| v.sort().clone()).collect()
    }

    pub fn var_set(&self) -> BTreeSet<Variable> {
        self.0.iter().cloned().collect()
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::print::context_to_string(self))
    }
}

impl IntoIterator for Context {
    type Item = Variable;
    type IntoIter = std::vec::IntoIter<Variable>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InContextError {
    #[error("context {ctx} is not suitable: free variable `{var}` is missing")]
    NotSuitable { ctx: String, var: String },
    #[error("variable `{var}` occurs both bound and free in `{formula}`")]
    BoundFreeClash { var: String, formula: String },
}

/// A term paired with a suitable context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermInContext {
    ctx: Context,
    term: Term,
}

impl TermInContext {
    pub fn new(ctx: Context, term: Term) -> Result<Self, InContextError> {
        if let Some(v) = term.free_variables().iter().find(|v| !ctx.contains(v)) {
            return Err(InContextError::NotSuitable {
                ctx: ctx.to_string(),
                var: v.to_string(),
            });
        }
        Ok(TermInContext { ctx, term })
    }

    pub fn ctx(&self) -> &Context {
        &self.ctx
    }

    pub fn term(&self) -> &Term {
        &self.term
    }
}

impl fmt::Display for TermInContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} . {}", self.ctx, self.term)
    }
}

/// A formula paired with a suitable context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormulaInContext {
    ctx: Context,
    formula: Formula,
}

impl FormulaInContext {
    pub fn new(ctx: Context, formula: Formula) -> Result<Self, InContextError> {
        if let Some(v) = formula.free_variables().iter().find(|v| !ctx.contains(v)) {
            return Err(InContextError::NotSuitable {
                ctx: ctx.to_string(),
                var: v.to_string(),
            });
        }
        if !formula.bound_free_separated() {
            let free = formula.free_variables();
            let clash = formula
                .bound_variables()
                .into_iter()
                .find(|v| free.contains(v))
                .expect("clash witnessed");
            return Err(InContextError::BoundFreeClash {
                var: clash.to_string(),
                formula: formula.to_string(),
            });
        }
        Ok(FormulaInContext { ctx, formula })
    }

    pub fn ctx(&self) -> &Context {
        &self.ctx
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }
}

impl fmt::Display for FormulaInContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} . {}", self.ctx, self.formula)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SequentError {
    #[error("context {ctx} is not suitable for the {side}: `{var}` is free")]
    NotSuitable {
        side: &'static str,
        ctx: String,
        var: String,
    },
    #[error("variable `{var}` occurs both bound and free in the {side}")]
    BoundFreeClash { side: &'static str, var: String },
}

/// A sequent φ ⊢_{x⃗} ψ: two formulae sharing one suitable context.
///
/// Construction rejects a context missing a free variable and any side in
/// which some variable occurs both bound and free. A variable may be free on
/// one side and bound on the other; the quantifier rules depend on that.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequent {
    lhs: Formula,
    ctx: Context,
    rhs: Formula,
}

impl Sequent {
    pub fn new(lhs: Formula, ctx: Context, rhs: Formula) -> Result<Self, SequentError> {
        for (side, formula) in [("left-hand side", &lhs), ("right-hand side", &rhs)] {
            if let Some(v) = formula.free_variables().iter().find(|v| !ctx.contains(v)) {
                return Err(SequentError::NotSuitable {
                    side,
                    ctx: ctx.to_string(),
                    var: v.to_string(),
                });
            }
            if !formula.bound_free_separated() {
                let free = formula.free_variables();
                let clash = formula
                    .bound_variables()
                    .into_iter()
                    .find(|v| free.contains(v))
                    .expect("clash witnessed");
                return Err(SequentError::BoundFreeClash {
                    side,
                    var: clash.to_string(),
                });
            }
        }
        Ok(Sequent { lhs, ctx, rhs })
    }

    pub fn lhs(&self) -> &Formula {
        &self.lhs
    }

    pub fn ctx(&self) -> &Context {
        &self.ctx
    }

    pub fn rhs(&self) -> &Formula {
        &self.rhs
    }

    pub fn classify(&self) -> Fragment {
        self.lhs.classify().max(self.rhs.classify())
    }

    /// All variables mentioned anywhere in the sequent.
    pub fn all_variables(&self) -> BTreeSet<Variable> {
        let mut out = self.ctx.var_set();
        out.extend(self.lhs.all_variables());
        out.extend(self.rhs.all_variables());
        out
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::print::sequent_to_string(self))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TheoryError {
    #[error("axiom is not well-formed: {0}")]
    IllFormed(#[from] SortError),
    #[error("axiom context mentions sort `{0}` not in the signature")]
    UnknownContextSort(SortName),
}

/// A signature together with a list of axiom sequents. Axioms behave as a
/// set: exact duplicates are not added twice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Theory {
    signature: Signature,
    axioms: Vec<Sequent>,
}

impl Theory {
    pub fn new(signature: Signature) -> Self {
        Theory {
            signature,
            axioms: Vec::new(),
        }
    }

    pub fn add_axiom(&mut self, axiom: Sequent) -> Result<(), TheoryError> {
        for v in axiom.ctx().iter() {
            if !self.signature.has_sort(v.sort()) {
                return Err(TheoryError::UnknownContextSort(v.sort().clone()));
            }
        }
        self.signature.check_formula(axiom.lhs())?;
        self.signature.check_formula(axiom.rhs())?;
        if !self.axioms.contains(&axiom) {
            self.axioms.push(axiom);
        }
        Ok(())
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn axioms(&self) -> &[Sequent] {
        &self.axioms
    }

    pub fn classify(&self) -> Fragment {
        self.axioms
            .iter()
            .map(Sequent::classify)
            .max()
            .unwrap_or(Fragment::Atomic)
    }
}

/// The fragment ladder. Later fragments admit strictly more connectives and
/// rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fragment {
    Atomic,
    Horn,
    Regular,
    Coherent,
    Intuitionistic,
    Classical,
}

impl Fragment {
    pub const ALL: [Fragment; 6] = [
        Fragment::Atomic,
        Fragment::Horn,
        Fragment::Regular,
        Fragment::Coherent,
        Fragment::Intuitionistic,
        Fragment::Classical,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Fragment::Atomic => "atomic",
            Fragment::Horn => "horn",
            Fragment::Regular => "regular",
            Fragment::Coherent => "coherent",
            Fragment::Intuitionistic => "intuitionistic",
            Fragment::Classical => "classical",
        }
    }

    pub fn from_name(name: &str) -> Option<Fragment> {
        Fragment::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// The fragment one rung down, if any.
    pub fn predecessor(&self) -> Option<Fragment> {
        let idx = Fragment::ALL.iter().position(|f| f == self).unwrap();
        idx.checked_sub(1).map(|i| Fragment::ALL[i])
    }
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Structural equality up to renaming of bound variables.
pub fn alpha_equivalent(a: &Formula, b: &Formula) -> bool {
    fn go(a: &Formula, b: &Formula, da: &mut Vec<Variable>, db: &mut Vec<Variable>) -> bool {
        match (a, b) {
            (Formula::Rel(ra, xs), Formula::Rel(rb, ys)) => {
                ra == rb && xs.len() == ys.len() && xs
                    .iter()
                    .zip(ys)
                    .all(|(x, y)| term_eq(x, y, da, db))
            }
            (Formula::Eq(s1, t1), Formula::Eq(s2, t2)) => {
                term_eq(s1, s2, da, db) && term_eq(t1, t2, da, db)
            }
            (Formula::Top, Formula::Top) | (Formula::Bot, Formula::Bot) => true,
            (Formula::And(x1, y1), Formula::And(x2, y2))
            | (Formula::Or(x1, y1), Formula::Or(x2, y2))
            | (Formula::Implies(x1, y1), Formula::Implies(x2, y2)) => {
                go(x1, x2, da, db) && go(y1, y2, da, db)
            }
            (Formula::Not(x), Formula::Not(y)) => go(x, y, da, db),
            (Formula::Exists(va, ba), Formula::Exists(vb, bb))
            | (Formula::Forall(va, ba), Formula::Forall(vb, bb)) => {
                if va.sort() != vb.sort() {
                    return false;
                }
                da.push(va.clone());
                db.push(vb.clone());
                let ok = go(ba, bb, da, db);
                da.pop();
                db.pop();
                ok
            }
            _ => false,
        }
    }

    fn term_eq(a: &Term, b: &Term, da: &[Variable], db: &[Variable]) -> bool {
        match (a, b) {
            (Term::Var(x), Term::Var(y)) => {
                let ia = da.iter().rposition(|v| v == x);
                let ib = db.iter().rposition(|v| v == y);
                match (ia, ib) {
                    (Some(i), Some(j)) => i == j,
                    (None, None) => x == y,
                    _ => false,
                }
            }
            (Term::App(f, xs), Term::App(g, ys)) => {
                f == g && xs.len() == ys.len() && xs
                    .iter()
                    .zip(ys)
                    .all(|(x, y)| term_eq(x, y, da, db))
            }
            _ => false,
        }
    }

    go(a, b, &mut Vec::new(), &mut Vec::new())
}

/// Alpha-equivalence of sequents: contexts equal, both sides alpha-equivalent.
pub fn alpha_equivalent_sequents(a: &Sequent, b: &Sequent) -> bool {
    a.ctx() == b.ctx()
        && alpha_equivalent(a.lhs(), b.lhs())
        && alpha_equivalent(a.rhs(), b.rhs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> Signature {
        let mut s = Signature::new();
        s.add_sort("A").unwrap();
        s.add_sort("B").unwrap();
        s.add_function("f", vec!["A".into()], "B").unwrap();
        s.add_function("g", vec!["A".into(), "B".into()], "A").unwrap();
        s.add_constant("k", "A").unwrap();
        s.add_relation("R", vec!["A".into(), "B".into()]).unwrap();
        s.add_proposition("P").unwrap();
        s
    }

    fn va(n: &str) -> Variable {
        Variable::new(n, "A")
    }

    fn vb(n: &str) -> Variable {
        Variable::new(n, "B")
    }

    #[test]
    fn sort_of_checks_symbols_arities_and_sorts() {
        let s = sig();
        let t = Term::app("g", vec![Term::constant("k"), Term::app("f", vec![Term::var(va("x"))])]);
        assert_eq!(s.sort_of(&t).unwrap(), SortName::from("A"));

        let unknown = Term::app("h", vec![]);
        assert!(matches!(
            s.sort_of(&unknown),
            Err(SortError::UnknownSymbol { .. })
        ));

        let bad_arity = Term::app("f", vec![]);
        assert!(matches!(
            s.sort_of(&bad_arity),
            Err(SortError::ArityMismatch { .. })
        ));

        let bad_sort = Term::app("f", vec![Term::var(vb("y"))]);
        assert!(matches!(
            s.sort_of(&bad_sort),
            Err(SortError::SortMismatch { .. })
        ));
    }

    #[test]
    fn free_variables_skip_bound_occurrences() {
        let phi = Formula::exists(
            va("x"),
            Formula::rel("R", vec![Term::var(va("x")), Term::var(vb("y"))]),
        );
        let fv = phi.free_variables();
        assert!(fv.contains(&vb("y")));
        assert!(!fv.contains(&va("x")));
    }

    #[test]
    fn same_name_different_sort_is_a_different_variable() {
        let phi = Formula::exists(
            va("x"),
            Formula::rel("R", vec![Term::var(va("x")), Term::var(vb("x"))]),
        );
        let fv = phi.free_variables();
        assert_eq!(fv.len(), 1);
        assert!(fv.contains(&vb("x")));
    }

    #[test]
    fn canonical_context_is_first_occurrence_order() {
        let t = Term::app(
            "g",
            vec![
                Term::var(va("u")),
                Term::app("f", vec![Term::var(va("w"))]),
            ],
        );
        let ctx = t.canonical_context();
        assert_eq!(ctx.vars(), &[va("u"), va("w")]);
    }

    #[test]
    fn concat_contexts_is_left_first_dedup() {
        let c1 = Context::new(vec![va("x"), vb("y")]).unwrap();
        let c2 = Context::new(vec![vb("y"), va("z"), va("x")]).unwrap();
        assert_eq!(c1.concat(&c2).vars(), &[va("x"), vb("y"), va("z")]);
    }

    #[test]
    fn contexts_reject_duplicates() {
        assert!(Context::new(vec![va("x"), va("x")]).is_err());
        assert!(Context::new(vec![va("x"), vb("x")]).is_ok());
    }

    #[test]
    fn sequent_requires_suitability() {
        let phi = Formula::rel("R", vec![Term::var(va("x")), Term::var(vb("y"))]);
        let ok = Sequent::new(
            Formula::Top,
            Context::new(vec![va("x"), vb("y")]).unwrap(),
            phi.clone(),
        );
        assert!(ok.is_ok());
        let missing = Sequent::new(Formula::Top, Context::singleton(va("x")), phi);
        assert!(matches!(missing, Err(SequentError::NotSuitable { .. })));
    }

    #[test]
    fn sequent_rejects_bound_and_free_in_one_side() {
        let bad = Formula::and(
            Formula::exists(va("x"), Formula::eq(Term::var(va("x")), Term::var(va("x")))),
            Formula::eq(Term::var(va("x")), Term::var(va("x"))),
        );
        let r = Sequent::new(Formula::Top, Context::singleton(va("x")), bad);
        assert!(matches!(r, Err(SequentError::BoundFreeClash { .. })));
    }

    #[test]
    fn sequent_allows_free_left_bound_right() {
        // The shape the quantifier rules produce mid-derivation.
        let lhs = Formula::rel("R", vec![Term::var(va("y")), Term::var(vb("w"))]);
        let rhs = Formula::exists(
            va("y"),
            Formula::rel("R", vec![Term::var(va("y")), Term::var(vb("w"))]),
        );
        let ctx = Context::new(vec![va("y"), vb("w")]).unwrap();
        assert!(Sequent::new(lhs, ctx, rhs).is_ok());
    }

    #[test]
    fn alpha_equivalence_examples() {
        let e1 = Formula::exists(
            va("x"),
            Formula::rel("R", vec![Term::var(va("x")), Term::var(vb("w"))]),
        );
        let e2 = Formula::exists(
            va("z"),
            Formula::rel("R", vec![Term::var(va("z")), Term::var(vb("w"))]),
        );
        assert!(alpha_equivalent(&e1, &e2));

        // Different free variable: not alpha-equivalent.
        let e3 = Formula::exists(
            va("z"),
            Formula::rel("R", vec![Term::var(va("z")), Term::var(vb("v"))]),
        );
        assert!(!alpha_equivalent(&e1, &e3));

        // Different binder sort: not alpha-equivalent.
        let p1 = Formula::exists(va("x"), Formula::Top);
        let p2 = Formula::exists(vb("x"), Formula::Top);
        assert!(!alpha_equivalent(&p1, &p2));
    }

    #[test]
    fn alpha_equivalence_respects_shadowing() {
        let x = va("x");
        let y = va("y");
        // exists x. exists x. x = x  vs  exists x. exists y. y = y
        let a = Formula::exists(
            x.clone(),
            Formula::exists(x.clone(), Formula::eq(Term::var(x.clone()), Term::var(x.clone()))),
        );
        let b = Formula::exists(
            x.clone(),
            Formula::exists(y.clone(), Formula::eq(Term::var(y.clone()), Term::var(y.clone()))),
        );
        assert!(alpha_equivalent(&a, &b));
        // exists x. exists x. x = x  vs  exists x. exists y. x = x
        let c = Formula::exists(
            x.clone(),
            Formula::exists(y, Formula::eq(Term::var(x.clone()), Term::var(x))),
        );
        assert!(!alpha_equivalent(&a, &c));
    }

    #[test]
    fn classify_ladder() {
        let atom = Formula::prop("P");
        assert_eq!(atom.classify(), Fragment::Atomic);
        assert_eq!(Formula::Top.classify(), Fragment::Horn);
        assert_eq!(
            Formula::and(atom.clone(), Formula::Top).classify(),
            Fragment::Horn
        );
        assert_eq!(
            Formula::exists(va("x"), Formula::Top).classify(),
            Fragment::Regular
        );
        // Disjunction without any exists still lands at coherent.
        assert_eq!(
            Formula::or(atom.clone(), atom.clone()).classify(),
            Fragment::Coherent
        );
        assert_eq!(Formula::Bot.classify(), Fragment::Coherent);
        assert_eq!(
            Formula::implies(atom.clone(), atom.clone()).classify(),
            Fragment::Intuitionistic
        );
        assert_eq!(Formula::not(atom.clone()).classify(), Fragment::Intuitionistic);
        assert_eq!(
            Formula::forall(va("x"), Formula::Top).classify(),
            Fragment::Intuitionistic
        );
    }

    #[test]
    fn theory_classification_is_max_over_axioms() {
        let mut t = Theory::new(sig());
        t.add_axiom(
            Sequent::new(Formula::prop("P"), Context::empty(), Formula::prop("P")).unwrap(),
        )
        .unwrap();
        assert_eq!(t.classify(), Fragment::Atomic);
        t.add_axiom(
            Sequent::new(
                Formula::prop("P"),
                Context::empty(),
                Formula::or(Formula::prop("P"), Formula::prop("P")),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(t.classify(), Fragment::Coherent);
    }

    #[test]
    fn theory_axioms_behave_as_a_set() {
        let mut t = Theory::new(sig());
        let ax = Sequent::new(Formula::prop("P"), Context::empty(), Formula::Top).unwrap();
        t.add_axiom(ax.clone()).unwrap();
        t.add_axiom(ax).unwrap();
        assert_eq!(t.axioms().len(), 1);
    }

    #[test]
    fn fragment_order_and_predecessor() {
        assert!(Fragment::Atomic < Fragment::Horn);
        assert!(Fragment::Intuitionistic < Fragment::Classical);
        assert_eq!(Fragment::Horn.predecessor(), Some(Fragment::Atomic));
        assert_eq!(Fragment::Atomic.predecessor(), None);
    }
}
