//! Finite models in the category of iterators.
//!
//! An iterator is a finite carrier with a total step map; morphisms are
//! functions commuting with the steps. Sorts are interpreted as iterators,
//! function symbols as step-respecting maps, and relation symbols as
//! step-closed subsets of product carriers. A sequent holds when the
//! interpretation of its left side is contained in that of its right side
//! over the sequent's context.
//!
//! Meets, joins, and images along projections are computed pointwise; the
//! right adjoints (negation, implication, universal quantification) go
//! through the interior operator, the greatest step-closed subset contained
//! in a given subset. With identity steps everything degrades to ordinary
//! finite sets.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::subst::{
    apply_formula, apply_formula_in_context, apply_term, apply_term_in_context,
    FreshVariableSource, Substitution,
};
use crate::syntax::{
    canonical_context_of_terms, Context, Formula, FormulaInContext, Sequent, Signature, SortName,
    Term, TermInContext, Theory, Variable,
};

/// Products beyond this many tuples are refused; models are desk-scale.
pub const PRODUCT_CAP: usize = 1_000_000;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("sort {0} is not interpreted")]
    MissingSort(SortName),
    #[error("symbol {0} is not interpreted")]
    MissingSymbol(String),
    #[error("{0} is not declared in the signature")]
    UnknownSymbol(String),
    #[error("label {label} is not an element of {sort}")]
    UnknownLabel { sort: SortName, label: String },
    #[error("{symbol}: {detail}")]
    BadShape { symbol: String, detail: String },
    #[error("product of {0} tuples exceeds the cap of {PRODUCT_CAP}")]
    ProductTooLarge(usize),
    #[error("ill-formed input: {0}")]
    IllFormed(String),
}

/// A finite carrier with a total endofunction, written elementwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteIterator {
    labels: Vec<String>,
    step: Vec<usize>,
}

impl FiniteIterator {
    pub fn new(
        labels: Vec<String>,
        step_pairs: &[(&str, &str)],
    ) -> Result<FiniteIterator, ModelError> {
        let mut step = vec![usize::MAX; labels.len()];
        let index_of = |l: &str| labels.iter().position(|x| x == l);
        for (from, to) in step_pairs {
            let i = index_of(from).ok_or_else(|| ModelError::IllFormed(format!(
                "step source {from} is not a carrier element"
            )))?;
            let j = index_of(to).ok_or_else(|| ModelError::IllFormed(format!(
                "step target {to} is not a carrier element"
            )))?;
            if step[i] != usize::MAX {
                return Err(ModelError::IllFormed(format!("{from} steps twice")));
            }
            step[i] = j;
        }
        if let Some(i) = step.iter().position(|&s| s == usize::MAX) {
            return Err(ModelError::IllFormed(format!(
                "no step for {}",
                labels[i]
            )));
        }
        Ok(FiniteIterator { labels, step })
    }

    pub fn from_indices(labels: Vec<String>, step: Vec<usize>) -> Result<FiniteIterator, ModelError> {
        if step.len() != labels.len() || step.iter().any(|&s| s >= labels.len()) {
            return Err(ModelError::IllFormed(
                "step must be a total index map on the carrier".to_string(),
            ));
        }
        Ok(FiniteIterator { labels, step })
    }

    /// Plain finite set: every element steps to itself.
    pub fn identity(labels: Vec<String>) -> FiniteIterator {
        let step = (0..labels.len()).collect();
        FiniteIterator { labels, step }
    }

    pub fn empty() -> FiniteIterator {
        FiniteIterator {
            labels: Vec::new(),
            step: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn step_of(&self, i: usize) -> usize {
        self.step[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Materialized product of iterators. Tuples are numbered in lexicographic
/// order: the first factor is the most significant digit.
#[derive(Clone, Debug)]
pub struct ProductSpace {
    factors: Vec<FiniteIterator>,
    size: usize,
}

impl ProductSpace {
    pub fn new(factors: Vec<FiniteIterator>) -> Result<ProductSpace, ModelError> {
        let mut size: usize = 1;
        for f in &factors {
            size = size.saturating_mul(f.len());
            if size > PRODUCT_CAP {
                return Err(ModelError::ProductTooLarge(size));
            }
        }
        Ok(ProductSpace { factors, size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn arity(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[FiniteIterator] {
        &self.factors
    }

    pub fn tuple_of(&self, mut index: usize) -> Vec<usize> {
        let mut tuple = vec![0; self.factors.len()];
        for (k, f) in self.factors.iter().enumerate().rev() {
            tuple[k] = index % f.len();
            index /= f.len();
        }
        tuple
    }

    pub fn index_of(&self, tuple: &[usize]) -> usize {
        let mut index = 0;
        for (k, f) in self.factors.iter().enumerate() {
            index = index * f.len() + tuple[k];
        }
        index
    }

    /// Componentwise step on tuple indices.
    pub fn step_of(&self, index: usize) -> usize {
        let tuple = self.tuple_of(index);
        let stepped: Vec<usize> = tuple
            .iter()
            .zip(&self.factors)
            .map(|(&i, f)| f.step_of(i))
            .collect();
        self.index_of(&stepped)
    }

    pub fn labels_of(&self, index: usize) -> Vec<String> {
        self.tuple_of(index)
            .iter()
            .zip(&self.factors)
            .map(|(&i, f)| f.label(i).to_string())
            .collect()
    }

    fn describe(&self, index: usize) -> String {
        format!("({})", self.labels_of(index).join(", "))
    }
}

/// Subset of a product carrier, intended to be closed under the step.
/// Closure holds by construction for everything `interpret_formula`
/// produces; hand-built relation tables are checked by `validate_model`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedSubset {
    bits: Vec<bool>,
}

impl ClosedSubset {
    pub fn empty(size: usize) -> ClosedSubset {
        ClosedSubset {
            bits: vec![false; size],
        }
    }

    pub fn full(size: usize) -> ClosedSubset {
        ClosedSubset {
            bits: vec![true; size],
        }
    }

    pub fn from_members(size: usize, members: &[usize]) -> ClosedSubset {
        let mut bits = vec![false; size];
        for &m in members {
            bits[m] = true;
        }
        ClosedSubset { bits }
    }

    pub fn size(&self) -> usize {
        self.bits.len()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    pub fn is_subset_of(&self, other: &ClosedSubset) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(&a, &b)| !a || b)
    }

    pub fn intersection(&self, other: &ClosedSubset) -> ClosedSubset {
        ClosedSubset {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn union(&self, other: &ClosedSubset) -> ClosedSubset {
        ClosedSubset {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    pub fn is_closed_in(&self, space: &ProductSpace) -> bool {
        (0..self.bits.len()).all(|i| !self.bits[i] || self.bits[space.step_of(i)])
    }

    /// Forward orbit closure: the least closed superset.
    pub fn close_under(&self, space: &ProductSpace) -> ClosedSubset {
        let mut bits = self.bits.clone();
        let mut frontier: Vec<usize> = self.members();
        while let Some(i) = frontier.pop() {
            let j = space.step_of(i);
            if !bits[j] {
                bits[j] = true;
                frontier.push(j);
            }
        }
        ClosedSubset { bits }
    }
}

/// Greatest step-closed subset contained in `raw`: repeatedly drop elements
/// whose successor has been dropped, to a fixpoint.
pub fn interior(space: &ProductSpace, raw: &[bool]) -> ClosedSubset {
    let mut bits = raw.to_vec();
    loop {
        let mut changed = false;
        for i in 0..bits.len() {
            if bits[i] && !bits[space.step_of(i)] {
                bits[i] = false;
                changed = true;
            }
        }
        if !changed {
            return ClosedSubset { bits };
        }
    }
}

/// Interpretation of a signature: an iterator per sort, a step-respecting
/// table per function symbol, a closed subset per relation symbol.
#[derive(Clone, Debug)]
pub struct FiniteModel {
    signature: Signature,
    sorts: BTreeMap<SortName, FiniteIterator>,
    funs: BTreeMap<String, Vec<usize>>,
    rels: BTreeMap<String, ClosedSubset>,
}

impl FiniteModel {
    pub fn new(signature: Signature) -> FiniteModel {
        FiniteModel {
            signature,
            sorts: BTreeMap::new(),
            funs: BTreeMap::new(),
            rels: BTreeMap::new(),
        }
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn set_sort(
        &mut self,
        sort: impl Into<SortName>,
        interp: FiniteIterator,
    ) -> Result<(), ModelError> {
        let sort = sort.into();
        if !self.signature.has_sort(&sort) {
            return Err(ModelError::UnknownSymbol(sort.to_string()));
        }
        self.sorts.insert(sort, interp);
        Ok(())
    }

    pub fn sort_interp(&self, sort: &SortName) -> Result<&FiniteIterator, ModelError> {
        self.sorts
            .get(sort)
            .ok_or_else(|| ModelError::MissingSort(sort.clone()))
    }

    pub fn space_for_sorts(&self, sorts: &[SortName]) -> Result<ProductSpace, ModelError> {
        let factors = sorts
            .iter()
            .map(|s| self.sort_interp(s).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        ProductSpace::new(factors)
    }

    pub fn space_for_context(&self, ctx: &Context) -> Result<ProductSpace, ModelError> {
        let sorts: Vec<SortName> = ctx.iter().map(|v| v.sort().clone()).collect();
        self.space_for_sorts(&sorts)
    }

    fn args_space(&self, symbol: &str, arg_types: &[SortName]) -> Result<ProductSpace, ModelError> {
        self.space_for_sorts(arg_types).map_err(|e| match e {
            ModelError::ProductTooLarge(n) => ModelError::BadShape {
                symbol: symbol.to_string(),
                detail: format!("argument product of {n} tuples exceeds the cap"),
            },
            other => other,
        })
    }

    /// Raw index table over the argument product, lexicographic order.
    pub fn set_function_table(
        &mut self,
        name: impl Into<String>,
        table: Vec<usize>,
    ) -> Result<(), ModelError> {
        let name = name.into();
        let decl = self
            .signature
            .function(&name)
            .ok_or_else(|| ModelError::UnknownSymbol(name.clone()))?
            .clone();
        let space = self.args_space(&name, &decl.arg_types)?;
        let result = self.sort_interp(&decl.result)?;
        if table.len() != space.size() {
            return Err(ModelError::BadShape {
                symbol: name,
                detail: format!("table has {} entries, need {}", table.len(), space.size()),
            });
        }
        if table.iter().any(|&v| v >= result.len()) {
            return Err(ModelError::BadShape {
                symbol: name,
                detail: "table entry outside the result carrier".to_string(),
            });
        }
        self.funs.insert(name, table);
        Ok(())
    }

    /// Function given by label rows `(args..., result)`; must be total.
    pub fn set_function(
        &mut self,
        name: impl Into<String>,
        rows: &[(&[&str], &str)],
    ) -> Result<(), ModelError> {
        let name = name.into();
        let decl = self
            .signature
            .function(&name)
            .ok_or_else(|| ModelError::UnknownSymbol(name.clone()))?
            .clone();
        let space = self.args_space(&name, &decl.arg_types)?;
        let result = self.sort_interp(&decl.result)?.clone();
        let mut table = vec![usize::MAX; space.size()];
        for (args, out) in rows {
            if args.len() != decl.arg_types.len() {
                return Err(ModelError::BadShape {
                    symbol: name,
                    detail: format!("row has {} arguments, need {}", args.len(), decl.arg_types.len()),
                });
            }
            let mut tuple = Vec::with_capacity(args.len());
            for (label, sort) in args.iter().zip(&decl.arg_types) {
                let it = self.sort_interp(sort)?;
                tuple.push(it.index_of(label).ok_or_else(|| ModelError::UnknownLabel {
                    sort: sort.clone(),
                    label: label.to_string(),
                })?);
            }
            let out_ix = result.index_of(out).ok_or_else(|| ModelError::UnknownLabel {
                sort: decl.result.clone(),
                label: out.to_string(),
            })?;
            let ix = space.index_of(&tuple);
            if table[ix] != usize::MAX {
                return Err(ModelError::BadShape {
                    symbol: name,
                    detail: format!("duplicate row at {}", space.describe(ix)),
                });
            }
            table[ix] = out_ix;
        }
        if let Some(ix) = table.iter().position(|&v| v == usize::MAX) {
            return Err(ModelError::BadShape {
                symbol: name,
                detail: format!("no row for {}", space.describe(ix)),
            });
        }
        self.funs.insert(name, table);
        Ok(())
    }

    pub fn set_constant(
        &mut self,
        name: impl Into<String>,
        label: &str,
    ) -> Result<(), ModelError> {
        let name = name.into();
        self.set_function(name.clone(), &[(&[], label)])
    }

    pub fn fun_table(&self, name: &str) -> Result<&[usize], ModelError> {
        self.funs
            .get(name)
            .map(|t| t.as_slice())
            .ok_or_else(|| ModelError::MissingSymbol(name.to_string()))
    }

    /// Relation given by member label tuples. The subset is stored as
    /// given; `validate_model` checks closure.
    pub fn set_relation(
        &mut self,
        name: impl Into<String>,
        members: &[&[&str]],
    ) -> Result<(), ModelError> {
        let name = name.into();
        let decl = self
            .signature
            .relation(&name)
            .ok_or_else(|| ModelError::UnknownSymbol(name.clone()))?
            .clone();
        let space = self.args_space(&name, &decl.arg_types)?;
        let mut indices = Vec::new();
        for row in members {
            if row.len() != decl.arg_types.len() {
                return Err(ModelError::BadShape {
                    symbol: name,
                    detail: format!("member has {} components, need {}", row.len(), decl.arg_types.len()),
                });
            }
            let mut tuple = Vec::with_capacity(row.len());
            for (label, sort) in row.iter().zip(&decl.arg_types) {
                let it = self.sort_interp(sort)?;
                tuple.push(it.index_of(label).ok_or_else(|| ModelError::UnknownLabel {
                    sort: sort.clone(),
                    label: label.to_string(),
                })?);
            }
            indices.push(space.index_of(&tuple));
        }
        self.rels
            .insert(name, ClosedSubset::from_members(space.size(), &indices));
        Ok(())
    }

    pub fn set_relation_subset(
        &mut self,
        name: impl Into<String>,
        subset: ClosedSubset,
    ) -> Result<(), ModelError> {
        let name = name.into();
        let decl = self
            .signature
            .relation(&name)
            .ok_or_else(|| ModelError::UnknownSymbol(name.clone()))?
            .clone();
        let space = self.args_space(&name, &decl.arg_types)?;
        if subset.size() != space.size() {
            return Err(ModelError::BadShape {
                symbol: name,
                detail: format!("subset over {} tuples, need {}", subset.size(), space.size()),
            });
        }
        self.rels.insert(name, subset);
        Ok(())
    }

    pub fn set_proposition(&mut self, name: impl Into<String>, value: bool) -> Result<(), ModelError> {
        let name = name.into();
        let subset = if value {
            ClosedSubset::full(1)
        } else {
            ClosedSubset::empty(1)
        };
        self.set_relation_subset(name, subset)
    }

    pub fn rel_subset(&self, name: &str) -> Result<&ClosedSubset, ModelError> {
        self.rels
            .get(name)
            .ok_or_else(|| ModelError::MissingSymbol(name.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelViolation {
    pub symbol: String,
    pub element: String,
    pub detail: String,
}

impl std::fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at {}: {}", self.symbol, self.element, self.detail)
    }
}

/// Checks interpretation shapes, equivariance of every function table, and
/// closure of every relation subset, reporting each offending element.
pub fn validate_model(model: &FiniteModel) -> Result<(), Vec<ModelViolation>> {
    let mut violations = Vec::new();
    let sig = model.signature();
    for sort in sig.sorts() {
        if model.sort_interp(sort).is_err() {
            violations.push(ModelViolation {
                symbol: sort.to_string(),
                element: "-".to_string(),
                detail: "sort has no interpretation".to_string(),
            });
        }
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    for decl in sig.functions() {
        let space = match model.args_space(&decl.name, &decl.arg_types) {
            Ok(s) => s,
            Err(e) => {
                violations.push(ModelViolation {
                    symbol: decl.name.clone(),
                    element: "-".to_string(),
                    detail: e.to_string(),
                });
                continue;
            }
        };
        let result = model.sort_interp(&decl.result).unwrap();
        let table = match model.fun_table(&decl.name) {
            Ok(t) => t,
            Err(e) => {
                violations.push(ModelViolation {
                    symbol: decl.name.clone(),
                    element: "-".to_string(),
                    detail: e.to_string(),
                });
                continue;
            }
        };
        if table.len() != space.size() {
            violations.push(ModelViolation {
                symbol: decl.name.clone(),
                element: "-".to_string(),
                detail: format!("table has {} entries, need {}", table.len(), space.size()),
            });
            continue;
        }
        for i in 0..space.size() {
            if table[i] >= result.len() {
                violations.push(ModelViolation {
                    symbol: decl.name.clone(),
                    element: space.describe(i),
                    detail: "value outside the result carrier".to_string(),
                });
                continue;
            }
            let lhs = table[space.step_of(i)];
            let rhs = result.step_of(table[i]);
            if lhs != rhs {
                violations.push(ModelViolation {
                    symbol: decl.name.clone(),
                    element: space.describe(i),
                    detail: format!(
                        "does not respect the dynamics: steps to {}, image steps to {}",
                        result.label(lhs),
                        result.label(rhs)
                    ),
                });
            }
        }
    }
    for decl in sig.relations() {
        let space = match model.args_space(&decl.name, &decl.arg_types) {
            Ok(s) => s,
            Err(e) => {
                violations.push(ModelViolation {
                    symbol: decl.name.clone(),
                    element: "-".to_string(),
                    detail: e.to_string(),
                });
                continue;
            }
        };
        let subset = match model.rel_subset(&decl.name) {
            Ok(s) => s,
            Err(e) => {
                violations.push(ModelViolation {
                    symbol: decl.name.clone(),
                    element: "-".to_string(),
                    detail: e.to_string(),
                });
                continue;
            }
        };
        if subset.size() != space.size() {
            violations.push(ModelViolation {
                symbol: decl.name.clone(),
                element: "-".to_string(),
                detail: format!("subset over {} tuples, need {}", subset.size(), space.size()),
            });
            continue;
        }
        for i in subset.members() {
            if !subset.contains(space.step_of(i)) {
                violations.push(ModelViolation {
                    symbol: decl.name.clone(),
                    element: space.describe(i),
                    detail: format!("member steps out to {}", space.describe(space.step_of(i))),
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// A term over a context, tabulated: entry per context tuple, value an
/// index into the result sort's carrier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermMap {
    pub result_sort: SortName,
    pub table: Vec<usize>,
}

/// Variables become projections, applications compose the symbol's table
/// with the argument tuple; the result respects the dynamics by
/// construction.
pub fn interpret_term(
    model: &FiniteModel,
    ctx: &Context,
    term: &Term,
) -> Result<TermMap, ModelError> {
    let space = model.space_for_context(ctx)?;
    let map = interpret_term_in(model, ctx, &space, term)?;
    #[cfg(debug_assertions)]
    {
        let result = model.sort_interp(&map.result_sort)?;
        for i in 0..space.size() {
            debug_assert_eq!(
                map.table[space.step_of(i)],
                result.step_of(map.table[i]),
                "interpretation must respect the dynamics"
            );
        }
    }
    Ok(map)
}

fn interpret_term_in(
    model: &FiniteModel,
    ctx: &Context,
    space: &ProductSpace,
    term: &Term,
) -> Result<TermMap, ModelError> {
    match term {
        Term::Var(v) => {
            let pos = ctx
                .iter()
                .position(|c| c == v)
                .ok_or_else(|| ModelError::IllFormed(format!("{v} is not in the context")))?;
            let table = (0..space.size()).map(|i| space.tuple_of(i)[pos]).collect();
            Ok(TermMap {
                result_sort: v.sort().clone(),
                table,
            })
        }
        Term::App(f, args) => {
            let decl = model
                .signature
                .function(f)
                .ok_or_else(|| ModelError::UnknownSymbol(f.clone()))?
                .clone();
            if decl.arg_types.len() != args.len() {
                return Err(ModelError::IllFormed(format!("{f} applied to {} arguments", args.len())));
            }
            let arg_maps = args
                .iter()
                .map(|a| interpret_term_in(model, ctx, space, a))
                .collect::<Result<Vec<_>, _>>()?;
            let fun_space = model.args_space(f, &decl.arg_types)?;
            let table = model.fun_table(f)?;
            let out = (0..space.size())
                .map(|i| {
                    let tuple: Vec<usize> = arg_maps.iter().map(|m| m.table[i]).collect();
                    table[fun_space.index_of(&tuple)]
                })
                .collect();
            Ok(TermMap {
                result_sort: decl.result.clone(),
                table: out,
            })
        }
    }
}

/// Interprets a formula over a context as a step-closed subset of the
/// context's product carrier.
pub fn interpret_formula(
    model: &FiniteModel,
    ctx: &Context,
    formula: &Formula,
) -> Result<ClosedSubset, ModelError> {
    let space = model.space_for_context(ctx)?;
    interpret_formula_in(model, ctx, &space, formula)
}

fn interpret_formula_in(
    model: &FiniteModel,
    ctx: &Context,
    space: &ProductSpace,
    formula: &Formula,
) -> Result<ClosedSubset, ModelError> {
    match formula {
        Formula::Top => Ok(ClosedSubset::full(space.size())),
        Formula::Bot => Ok(ClosedSubset::empty(space.size())),
        Formula::Rel(r, args) => {
            let decl = model
                .signature
                .relation(r)
                .ok_or_else(|| ModelError::UnknownSymbol(r.clone()))?
                .clone();
            if decl.arg_types.len() != args.len() {
                return Err(ModelError::IllFormed(format!("{r} applied to {} arguments", args.len())));
            }
            let subset = model.rel_subset(r)?.clone();
            let rel_space = model.args_space(r, &decl.arg_types)?;
            let arg_maps = args
                .iter()
                .map(|a| interpret_term_in(model, ctx, space, a))
                .collect::<Result<Vec<_>, _>>()?;
            let mut bits = vec![false; space.size()];
            for (i, bit) in bits.iter_mut().enumerate() {
                let tuple: Vec<usize> = arg_maps.iter().map(|m| m.table[i]).collect();
                *bit = subset.contains(rel_space.index_of(&tuple));
            }
            Ok(ClosedSubset { bits })
        }
        Formula::Eq(a, b) => {
            let ma = interpret_term_in(model, ctx, space, a)?;
            let mb = interpret_term_in(model, ctx, space, b)?;
            let bits = ma
                .table
                .iter()
                .zip(&mb.table)
                .map(|(&x, &y)| x == y)
                .collect();
            Ok(ClosedSubset { bits })
        }
        Formula::And(a, b) => Ok(interpret_formula_in(model, ctx, space, a)?
            .intersection(&interpret_formula_in(model, ctx, space, b)?)),
        Formula::Or(a, b) => Ok(interpret_formula_in(model, ctx, space, a)?
            .union(&interpret_formula_in(model, ctx, space, b)?)),
        Formula::Implies(a, b) => {
            let sa = interpret_formula_in(model, ctx, space, a)?;
            let sb = interpret_formula_in(model, ctx, space, b)?;
            let raw: Vec<bool> = sa
                .bits
                .iter()
                .zip(&sb.bits)
                .map(|(&x, &y)| !x || y)
                .collect();
            Ok(interior(space, &raw))
        }
        Formula::Not(a) => {
            let sa = interpret_formula_in(model, ctx, space, a)?;
            let raw: Vec<bool> = sa.bits.iter().map(|&x| !x).collect();
            Ok(interior(space, &raw))
        }
        Formula::Exists(y, body) => {
            let (child_ctx, body) = bind(ctx, y, body);
            let fiber = model.sort_interp(y.sort())?.len();
            let child_space = model.space_for_context(&child_ctx)?;
            let child = interpret_formula_in(model, &child_ctx, &child_space, &body)?;
            let mut bits = vec![false; space.size()];
            for (i, bit) in bits.iter_mut().enumerate() {
                *bit = (0..fiber).any(|b| child.contains(i * fiber + b));
            }
            // Image of a closed subset along a projection is closed.
            Ok(ClosedSubset { bits })
        }
        Formula::Forall(y, body) => {
            let (child_ctx, body) = bind(ctx, y, body);
            let fiber = model.sort_interp(y.sort())?.len();
            let child_space = model.space_for_context(&child_ctx)?;
            let child = interpret_formula_in(model, &child_ctx, &child_space, &body)?;
            let mut raw = vec![false; space.size()];
            for (i, bit) in raw.iter_mut().enumerate() {
                *bit = (0..fiber).all(|b| child.contains(i * fiber + b));
            }
            Ok(interior(space, &raw))
        }
    }
}

// Appends the binder to the context, renaming it when the name is taken.
fn bind(ctx: &Context, y: &Variable, body: &Formula) -> (Context, Formula) {
    if !ctx.contains(y) {
        return (ctx.extended(y.clone()).expect("fresh binder"), body.clone());
    }
    let mut avoid: BTreeSet<Variable> = body.all_variables();
    avoid.extend(ctx.iter().cloned());
    avoid.insert(y.clone());
    let mut src = FreshVariableSource::avoiding(&avoid);
    let y2 = src.fresh_like(y);
    let theta = Substitution::rename(y.clone(), y2.clone()).expect("same sort");
    (
        ctx.extended(y2).expect("fresh binder"),
        apply_formula(body, &theta),
    )
}

/// Sequent satisfaction: containment of side interpretations.
pub fn satisfies(model: &FiniteModel, sequent: &Sequent) -> Result<bool, ModelError> {
    let lhs = interpret_formula(model, sequent.ctx(), sequent.lhs())?;
    let rhs = interpret_formula(model, sequent.ctx(), sequent.rhs())?;
    Ok(lhs.is_subset_of(&rhs))
}

/// A theory is satisfied when all of its axioms are.
pub fn theory_satisfied(model: &FiniteModel, theory: &Theory) -> Result<bool, ModelError> {
    for ax in theory.axioms() {
        if !satisfies(model, ax)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SubstCheckError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("substitution square fails at {element}: {lhs} vs {rhs}")]
    Mismatch {
        element: String,
        lhs: String,
        rhs: String,
    },
}

fn target_context(theta: &Substitution) -> Result<Context, ModelError> {
    Context::new(theta.targets().cloned().collect())
        .map_err(|e| ModelError::IllFormed(format!("substitution targets: {e}")))
}

/// Checks the commuting triangle for plain terms: interpreting t[s/y]
/// over x equals interpreting t over y composed with the tuple of the
/// interpretations of s over x.
pub fn term_substitution_commutes(
    model: &FiniteModel,
    term: &Term,
    theta: &Substitution,
    x_ctx: &Context,
) -> Result<(), SubstCheckError> {
    let y_ctx = target_context(theta)?;
    if !y_ctx.suitable_for_term(term) {
        return Err(ModelError::IllFormed(
            "substitution targets must cover the term's variables".to_string(),
        )
        .into());
    }
    let substituted = apply_term(term, theta);
    let lhs = interpret_term(model, x_ctx, &substituted)?;
    let s_maps = theta
        .terms()
        .map(|s| interpret_term(model, x_ctx, s))
        .collect::<Result<Vec<_>, _>>()?;
    let t_map = interpret_term(model, &y_ctx, term)?;
    let x_space = model.space_for_context(x_ctx)?;
    let y_space = model.space_for_context(&y_ctx)?;
    for i in 0..x_space.size() {
        let tuple: Vec<usize> = s_maps.iter().map(|m| m.table[i]).collect();
        let rhs = t_map.table[y_space.index_of(&tuple)];
        if lhs.table[i] != rhs {
            let result = model.sort_interp(&lhs.result_sort)?;
            return Err(SubstCheckError::Mismatch {
                element: x_space.describe(i),
                lhs: result.label(lhs.table[i]).to_string(),
                rhs: result.label(rhs).to_string(),
            });
        }
    }
    Ok(())
}

/// Checks the pullback square for plain formulae: interpreting phi[s/y]
/// over x is the preimage of phi's interpretation over y under the tuple
/// map of the s interpretations.
pub fn formula_substitution_commutes(
    model: &FiniteModel,
    formula: &Formula,
    theta: &Substitution,
    x_ctx: &Context,
) -> Result<(), SubstCheckError> {
    let y_ctx = target_context(theta)?;
    if !y_ctx.suitable_for_formula(formula) {
        return Err(ModelError::IllFormed(
            "substitution targets must cover the formula's free variables".to_string(),
        )
        .into());
    }
    let substituted = apply_formula(formula, theta);
    let lhs = interpret_formula(model, x_ctx, &substituted)?;
    let over_y = interpret_formula(model, &y_ctx, formula)?;
    let s_maps = theta
        .terms()
        .map(|s| interpret_term(model, x_ctx, s))
        .collect::<Result<Vec<_>, _>>()?;
    let x_space = model.space_for_context(x_ctx)?;
    let y_space = model.space_for_context(&y_ctx)?;
    for i in 0..x_space.size() {
        let tuple: Vec<usize> = s_maps.iter().map(|m| m.table[i]).collect();
        let rhs = over_y.contains(y_space.index_of(&tuple));
        if lhs.contains(i) != rhs {
            return Err(SubstCheckError::Mismatch {
                element: x_space.describe(i),
                lhs: lhs.contains(i).to_string(),
                rhs: rhs.to_string(),
            });
        }
    }
    Ok(())
}

// Positions of `sub`'s variables inside `ctx`; errors if one is missing.
fn positions(ctx: &Context, sub: &Context) -> Result<Vec<usize>, ModelError> {
    sub.iter()
        .map(|v| {
            ctx.iter()
                .position(|c| c == v)
                .ok_or_else(|| ModelError::IllFormed(format!("{v} missing from context {ctx}")))
        })
        .collect()
}

/// Checks the in-context substitution property for terms against the
/// composite through the canonical contexts of the substitution's terms
/// and of the term itself.
pub fn term_in_context_substitution_commutes(
    model: &FiniteModel,
    tic: &TermInContext,
    theta: &Substitution,
) -> Result<(), SubstCheckError> {
    let result = apply_term_in_context(tic, theta);
    let x_ctx = result.ctx();
    let lhs = interpret_term(model, x_ctx, result.term())?;

    let y_vars: Vec<Variable> = theta.targets().cloned().collect();
    let z_prime: Vec<Variable> = tic
        .ctx()
        .iter()
        .filter(|z| !y_vars.contains(z))
        .cloned()
        .collect();
    let theta_terms: Vec<Term> = theta.terms().cloned().collect();
    let x_prime = canonical_context_of_terms(&theta_terms);
    let u_ctx = tic.term().canonical_context();
    let yz_vars: Vec<Variable> = y_vars.iter().chain(z_prime.iter()).cloned().collect();
    let yz_ctx = Context::new(yz_vars).map_err(|e| ModelError::IllFormed(e.to_string()))?;
    let z_ctx = Context::new(z_prime).map_err(|e| ModelError::IllFormed(e.to_string()))?;

    let x_space = model.space_for_context(x_ctx)?;
    let xp_space = model.space_for_context(&x_prime)?;
    let xp_pos = positions(x_ctx, &x_prime)?;
    let zp_pos = positions(x_ctx, &z_ctx)?;
    let u_pos = positions(&yz_ctx, &u_ctx)?;

    let s_maps = theta_terms
        .iter()
        .map(|s| interpret_term(model, &x_prime, s))
        .collect::<Result<Vec<_>, _>>()?;
    let t_map = interpret_term(model, &u_ctx, tic.term())?;
    let u_space = model.space_for_context(&u_ctx)?;

    for i in 0..x_space.size() {
        let a = x_space.tuple_of(i);
        let xp_tuple: Vec<usize> = xp_pos.iter().map(|&p| a[p]).collect();
        let xp_ix = xp_space.index_of(&xp_tuple);
        let mut yz_tuple: Vec<usize> = s_maps.iter().map(|m| m.table[xp_ix]).collect();
        yz_tuple.extend(zp_pos.iter().map(|&p| a[p]));
        let u_tuple: Vec<usize> = u_pos.iter().map(|&p| yz_tuple[p]).collect();
        let rhs = t_map.table[u_space.index_of(&u_tuple)];
        if lhs.table[i] != rhs {
            let result_sort = model.sort_interp(&lhs.result_sort)?;
            return Err(SubstCheckError::Mismatch {
                element: x_space.describe(i),
                lhs: result_sort.label(lhs.table[i]).to_string(),
                rhs: result_sort.label(rhs).to_string(),
            });
        }
    }
    Ok(())
}

/// Checks the in-context substitution property for formulae: the
/// substituted interpretation is the preimage of the canonical-context
/// interpretation under the tuple-and-projection map.
pub fn formula_in_context_substitution_commutes(
    model: &FiniteModel,
    fic: &FormulaInContext,
    theta: &Substitution,
) -> Result<(), SubstCheckError> {
    let result = apply_formula_in_context(fic, theta);
    let x_ctx = result.ctx();
    let lhs = interpret_formula(model, x_ctx, result.formula())?;

    let y_vars: Vec<Variable> = theta.targets().cloned().collect();
    let z_prime: Vec<Variable> = fic
        .ctx()
        .iter()
        .filter(|z| !y_vars.contains(z))
        .cloned()
        .collect();
    let u_ctx = fic.formula().canonical_context();
    let yz_vars: Vec<Variable> = y_vars.iter().chain(z_prime.iter()).cloned().collect();
    let yz_ctx = Context::new(yz_vars).map_err(|e| ModelError::IllFormed(e.to_string()))?;
    let z_ctx = Context::new(z_prime).map_err(|e| ModelError::IllFormed(e.to_string()))?;

    let x_space = model.space_for_context(x_ctx)?;
    let zp_pos = positions(x_ctx, &z_ctx)?;
    let u_pos = positions(&yz_ctx, &u_ctx)?;

    let s_maps = theta
        .terms()
        .map(|s| interpret_term(model, x_ctx, s))
        .collect::<Result<Vec<_>, _>>()?;
    let over_u = interpret_formula(model, &u_ctx, fic.formula())?;
    let u_space = model.space_for_context(&u_ctx)?;

    for i in 0..x_space.size() {
        let a = x_space.tuple_of(i);
        let mut yz_tuple: Vec<usize> = s_maps.iter().map(|m| m.table[i]).collect();
        yz_tuple.extend(zp_pos.iter().map(|&p| a[p]));
        let u_tuple: Vec<usize> = u_pos.iter().map(|&p| yz_tuple[p]).collect();
        let rhs = over_u.contains(u_space.index_of(&u_tuple));
        if lhs.contains(i) != rhs {
            return Err(SubstCheckError::Mismatch {
                element: x_space.describe(i),
                lhs: lhs.contains(i).to_string(),
                rhs: rhs.to_string(),
            });
        }
    }
    Ok(())
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Random iterator with a bias toward containing a fixed point, which
/// keeps step-respecting maps into it easy to find.
pub fn random_iterator<R: Rng + ?Sized>(
    rng: &mut R,
    max_len: usize,
    prefix: &str,
) -> FiniteIterator {
    let n = rng.gen_range(1..=max_len.max(1));
    let mut step: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    if rng.gen_bool(0.5) {
        step[0] = 0;
    }
    FiniteIterator {
        labels: labels(prefix, n),
        step,
    }
}

// Distance of each element to its eventual cycle; 0 on the cycle.
fn cycle_distances(it: &FiniteIterator) -> Vec<usize> {
    let n = it.len();
    let mut on_cycle = vec![false; n];
    for start in 0..n {
        // Walk 2n steps to land on the cycle, then mark one loop of it.
        let mut x = start;
        for _ in 0..2 * n {
            x = it.step_of(x);
        }
        let entry = x;
        loop {
            on_cycle[x] = true;
            x = it.step_of(x);
            if x == entry {
                break;
            }
        }
    }
    let mut dist = vec![usize::MAX; n];
    for (i, &c) in on_cycle.iter().enumerate() {
        if c {
            dist[i] = 0;
        }
    }
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            if dist[i] == usize::MAX && dist[it.step_of(i)] != usize::MAX {
                dist[i] = dist[it.step_of(i)] + 1;
                changed = true;
            }
        }
    }
    dist
}

fn iterate(it: &FiniteIterator, mut x: usize, k: usize) -> usize {
    for _ in 0..k {
        x = it.step_of(x);
    }
    x
}

// Random step-respecting table from the product space into the result
// iterator, or None when the random walk paints itself into a corner.
fn random_equivariant_table<R: Rng + ?Sized>(
    rng: &mut R,
    space: &ProductSpace,
    result: &FiniteIterator,
) -> Option<Vec<usize>> {
    let n = space.size();
    if n == 0 {
        return Some(Vec::new());
    }
    if result.is_empty() {
        return None;
    }
    // Flatten the product into one iterator to reuse the cycle machinery.
    let flat = FiniteIterator {
        labels: labels("p", n),
        step: (0..n).map(|i| space.step_of(i)).collect(),
    };
    let dist = cycle_distances(&flat);
    let mut table = vec![usize::MAX; n];
    // Cycles first: the image of a cycle element must return to itself
    // after one loop.
    for start in 0..n {
        if dist[start] != 0 || table[start] != usize::MAX {
            continue;
        }
        let mut len = 1;
        let mut x = flat.step_of(start);
        while x != start {
            len += 1;
            x = flat.step_of(x);
        }
        let candidates: Vec<usize> = (0..result.len())
            .filter(|&v| iterate(result, v, len) == v)
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let mut v = candidates[rng.gen_range(0..candidates.len())];
        let mut x = start;
        loop {
            table[x] = v;
            x = flat.step_of(x);
            v = result.step_of(v);
            if x == start {
                break;
            }
        }
    }
    // Tails by increasing distance: the successor's image is known, pick
    // any preimage of it.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| dist[i]);
    for i in order {
        if table[i] != usize::MAX {
            continue;
        }
        let want = table[flat.step_of(i)];
        let candidates: Vec<usize> = (0..result.len())
            .filter(|&v| result.step_of(v) == want)
            .collect();
        if candidates.is_empty() {
            return None;
        }
        table[i] = candidates[rng.gen_range(0..candidates.len())];
    }
    Some(table)
}

/// Random closed subset: sample elements, then close forward.
pub fn random_closed_subset<R: Rng + ?Sized>(
    rng: &mut R,
    space: &ProductSpace,
    density: f64,
) -> ClosedSubset {
    let seeds: Vec<usize> = (0..space.size())
        .filter(|_| rng.gen_bool(density))
        .collect();
    ClosedSubset::from_members(space.size(), &seeds).close_under(space)
}

/// Random model of the signature with carriers of at most `max_carrier`
/// elements; relation subsets are closed by construction. Retries until
/// every function symbol admits a step-respecting table.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    signature: &Signature,
    max_carrier: usize,
) -> FiniteModel {
    'attempt: for _ in 0..1000 {
        let mut model = FiniteModel::new(signature.clone());
        for (k, sort) in signature.sorts().iter().enumerate() {
            let prefix = format!("{}{}_", sort.to_string().to_lowercase(), k);
            let it = random_iterator(rng, max_carrier, &prefix);
            model.set_sort(sort.clone(), it).expect("declared sort");
        }
        for decl in signature.functions() {
            let space = match model.args_space(&decl.name, &decl.arg_types) {
                Ok(s) => s,
                Err(_) => continue 'attempt,
            };
            let result = model.sort_interp(&decl.result).expect("interpreted sort");
            let mut found = false;
            for _ in 0..20 {
                if let Some(table) = random_equivariant_table(rng, &space, result) {
                    model
                        .set_function_table(decl.name.clone(), table)
                        .expect("table shape");
                    found = true;
                    break;
                }
            }
            if !found {
                continue 'attempt;
            }
        }
        for decl in signature.relations() {
            let space = match model.args_space(&decl.name, &decl.arg_types) {
                Ok(s) => s,
                Err(_) => continue 'attempt,
            };
            let subset = random_closed_subset(rng, &space, 0.35);
            model
                .set_relation_subset(decl.name.clone(), subset)
                .expect("subset shape");
        }
        return model;
    }
    panic!("could not build a random model for this signature");
}

/// The two-sort incidence example: points flow into a two-cycle, lines
/// record the parity and height of point pairs.
pub fn points_lines() -> (Theory, FiniteModel) {
    let mut sig = Signature::new();
    sig.add_sort("Points").unwrap();
    sig.add_sort("Lines").unwrap();
    sig.add_function("f", vec!["Points".into(), "Points".into()], "Lines")
        .unwrap();
    sig.add_relation("I", vec!["Points".into(), "Lines".into()])
        .unwrap();

    let x = Variable::new("x", "Points");
    let y = Variable::new("y", "Points");
    let fxy = Term::app(
        "f",
        vec![Term::var(x.clone()), Term::var(y.clone())],
    );
    let axiom = Sequent::new(
        Formula::Top,
        Context::new(vec![x.clone(), y.clone()]).unwrap(),
        Formula::and(
            Formula::rel("I", vec![Term::var(x), fxy.clone()]),
            Formula::rel("I", vec![Term::var(y), fxy]),
        ),
    )
    .unwrap();
    let mut theory = Theory::new(sig.clone());
    theory.add_axiom(axiom).unwrap();

    let mut model = FiniteModel::new(sig);
    model
        .set_sort(
            "Points",
            FiniteIterator::new(
                vec!["w".into(), "x".into(), "y".into(), "z".into()],
                &[("w", "x"), ("x", "y"), ("y", "z"), ("z", "y")],
            )
            .unwrap(),
        )
        .unwrap();
    model
        .set_sort(
            "Lines",
            FiniteIterator::new(
                vec!["e2".into(), "e1".into(), "star".into(), "o1".into(), "o2".into()],
                &[
                    ("e2", "e1"),
                    ("e1", "star"),
                    ("star", "star"),
                    ("o1", "star"),
                    ("o2", "o1"),
                ],
            )
            .unwrap(),
        )
        .unwrap();
    model
        .set_function(
            "f",
            &[
                (&["w", "w"], "e2"),
                (&["w", "x"], "o2"),
                (&["w", "y"], "e2"),
                (&["w", "z"], "o2"),
                (&["x", "w"], "o2"),
                (&["x", "x"], "e1"),
                (&["x", "y"], "o1"),
                (&["x", "z"], "e1"),
                (&["y", "w"], "e2"),
                (&["y", "x"], "o1"),
                (&["y", "y"], "star"),
                (&["y", "z"], "star"),
                (&["z", "w"], "o2"),
                (&["z", "x"], "e1"),
                (&["z", "y"], "star"),
                (&["z", "z"], "star"),
            ],
        )
        .unwrap();
    model
        .set_relation(
            "I",
            &[
                &["y", "e2"],
                &["w", "e2"],
                &["z", "e1"],
                &["x", "e1"],
                &["w", "o2"],
                &["x", "o1"],
                &["y", "star"],
                &["z", "star"],
                &["y", "o1"],
                &["x", "o2"],
                &["z", "o2"],
            ],
        )
        .unwrap();
    (theory, model)
}

/// One-axiom theory whose model separates a sequent from its weakening:
/// the second sort is empty, so the padded sequent holds vacuously while
/// the unpadded one fails.
pub fn dropped_variable_counterexample() -> (Theory, FiniteModel) {
    let mut sig = Signature::new();
    sig.add_sort("A").unwrap();
    sig.add_sort("B").unwrap();
    sig.add_relation("S", vec!["A".into()]).unwrap();
    sig.add_relation("R", vec!["A".into()]).unwrap();

    let a = Variable::new("a", "A");
    let b = Variable::new("b", "B");
    let axiom = Sequent::new(
        Formula::rel("R", vec![Term::var(a.clone())]),
        Context::new(vec![a.clone(), b]).unwrap(),
        Formula::rel("S", vec![Term::var(a)]),
    )
    .unwrap();
    let mut theory = Theory::new(sig.clone());
    theory.add_axiom(axiom).unwrap();

    let mut model = FiniteModel::new(sig);
    model
        .set_sort(
            "A",
            FiniteIterator::new(
                vec!["a1".into(), "a2".into(), "a3".into(), "c1".into(), "c2".into()],
                &[
                    ("a1", "a2"),
                    ("a2", "a3"),
                    ("a3", "a1"),
                    ("c1", "c2"),
                    ("c2", "c1"),
                ],
            )
            .unwrap(),
        )
        .unwrap();
    model.set_sort("B", FiniteIterator::empty()).unwrap();
    model
        .set_relation("R", &[&["a1"], &["a2"], &["a3"]])
        .unwrap();
    model.set_relation("S", &[&["c1"], &["c2"]]).unwrap();
    (theory, model)
}
