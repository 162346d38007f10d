//! Multi-sorted first-order logic over the fragment ladder
//! atomic < Horn < regular < coherent < intuitionistic < classical.
//!
//! The crate provides:
//!
//! - syntax: signatures, terms and formulae in context, sequents, theories
//! - capture-avoiding simultaneous substitution and composition
//! - unification of bare and in-context terms and formulae
//! - Horn normal form and the sequent/formula translations
//! - forward chaining (propositional and first-order) with derivation output
//! - a schema-exact sequent calculus proof kernel and a derivation corpus
//! - finite semantics in the category of finite iterators (a set with an
//!   endofunction), including the non-Boolean right adjoints
//! - a text frontend for theory, model, and proof files

pub mod chain;
pub mod corpus;
pub mod kernel;
pub mod normal;
pub mod parse;
pub mod print;
pub mod semantics;
pub mod subst;
pub mod syntax;
pub mod unify;

pub use syntax::{
    Context, Formula, Fragment, Sequent, Signature, SortName, Term, Theory, Variable,
};
