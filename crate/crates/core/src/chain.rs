//! Forward chaining for Horn theories in normal form.
//!
//! Three searches live here: a propositional loop driven by per-axiom
//! premise counters, closed-sort detection over a signature (the same loop
//! one level down, on sorts instead of propositions), and a first-order
//! loop that unifies queue facts against axiom premise lists and reconciles
//! leftover context variables when a derived fact meets the goal.
//!
//! Every run produces a trace. Trace rows carry numbered script lines, one
//! per derived sequent, labelled the way a person would write the proof out
//! (`Cut 6, 7`, `Apply [x3 / x1] to Axiom 1`). Alongside the script, each
//! search assembles a [`Derivation`] for the proof kernel in which the
//! non-primitive script steps are expanded into kernel rules; every script
//! sequent appears verbatim among the kernel lines, in order. The kernel
//! derivation is attached whenever any line was emitted, so even a failed
//! search can have its partial work checked.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::kernel::{Derivation, Rule};
use crate::normal::{flatten_conjunction, NormalHornSequent};
use crate::subst::{apply_formula, apply_formula_in_context, Substitution};
use crate::syntax::{
    alpha_equivalent, canonical_context_of_terms, Context, Formula, FormulaInContext, Fragment,
    Sequent, Signature, SortName, Term, Theory, Variable,
};
use crate::unify::unify_formulae_in_context;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("not a normal-form Horn sequent: {0}")]
    NotNormalForm(String),
    #[error("not propositional: {0}")]
    NotPropositional(String),
    #[error("sort `{0}` is not declared")]
    UnknownSort(SortName),
    #[error("budget exhausted after {passes} passes with {queue} queued facts")]
    BudgetExhausted { passes: usize, queue: usize },
}

/// Caps for the first-order search, which need not terminate once function
/// symbols appear. `passes` bounds the while-new sweeps, `queue` the number
/// of stored facts; their product bounds total unification attempts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationBudget {
    pub passes: usize,
    pub queue: usize,
}

impl Default for IterationBudget {
    fn default() -> IterationBudget {
        IterationBudget {
            passes: 64,
            queue: 4096,
        }
    }
}

/// One numbered line of the emitted proof script.
///
/// `rule` is a short label: `Id`, `AndE`, `AndI`, `Top`, `Cut`, `Axiom n`,
/// `Apply [t / x] to Axiom n`, `Apply [t / x] to` (cite follows), or a bare
/// substitution `[t / x]` applied to the cited line. `cites` are 1-based
/// indices of earlier script lines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptLine {
    pub index: usize,
    pub sequent: Sequent,
    pub rule: String,
    pub cites: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueEntry {
    pub text: String,
    pub consumed: bool,
}

/// One row of the search trace: the queue history after the step, what was
/// popped (propositional only), which axiom counters were decremented and to
/// what, which axioms fired, and the script lines the step emitted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceRow {
    pub queue: Vec<QueueEntry>,
    pub popped: Option<String>,
    pub decrements: Vec<(usize, usize)>,
    pub fired: Vec<usize>,
    pub lines: Vec<ScriptLine>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainResult {
    pub derivable: bool,
    pub trace: Vec<TraceRow>,
    /// Kernel form of the script; present whenever any line was emitted.
    /// When `derivable`, its conclusion is the goal sequent.
    pub derivation: Option<Derivation>,
}

impl ChainResult {
    /// All script lines across the trace, in emission order.
    pub fn script(&self) -> Vec<&ScriptLine> {
        self.trace.iter().flat_map(|r| r.lines.iter()).collect()
    }
}

/// An atomic formula paired with a suitable context: the unit the
/// first-order queue stores.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactInContext {
    ctx: Context,
    atom: Formula,
}

impl FactInContext {
    pub fn new(ctx: Context, atom: Formula) -> Result<FactInContext, ChainError> {
        if !matches!(atom, Formula::Rel(..) | Formula::Eq(..)) {
            return Err(ChainError::NotNormalForm(format!(
                "fact `{atom}` is not atomic"
            )));
        }
        FormulaInContext::new(ctx.clone(), atom.clone())
            .map_err(|e| ChainError::NotNormalForm(e.to_string()))?;
        Ok(FactInContext { ctx, atom })
    }

    pub fn ctx(&self) -> &Context {
        &self.ctx
    }

    pub fn atom(&self) -> &Formula {
        &self.atom
    }
}

impl std::fmt::Display for FactInContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} . {}", self.ctx, self.atom)
    }
}

// ---------------------------------------------------------------------
// Shared emission machinery.

fn seq(lhs: Formula, ctx: &Context, rhs: Formula) -> Sequent {
    Sequent::new(lhs, ctx.clone(), rhs).expect("chaining emits well-formed sequents")
}

/// Builds the script and the kernel derivation side by side. Script lines
/// are buffered per trace row; kernel lines accumulate for the whole run.
struct Emitter {
    derivation: Derivation,
    pending: Vec<ScriptLine>,
    emitted: usize,
}

impl Emitter {
    fn new() -> Emitter {
        Emitter {
            derivation: Derivation::new(Fragment::Horn),
            pending: Vec::new(),
            emitted: 0,
        }
    }

    fn kernel(&mut self, sequent: Sequent, rule: Rule, premises: Vec<usize>) -> usize {
        self.derivation.push(sequent, rule, premises);
        self.derivation.lines.len()
    }

    fn script(&mut self, sequent: Sequent, rule: impl Into<String>, cites: Vec<usize>) -> usize {
        self.emitted += 1;
        self.pending.push(ScriptLine {
            index: self.emitted,
            sequent,
            rule: rule.into(),
            cites,
        });
        self.emitted
    }

    fn take(&mut self) -> Vec<ScriptLine> {
        std::mem::take(&mut self.pending)
    }

    /// Kernel lines concluding `w ⊢ part`, where the non-top conjuncts of
    /// `part` all occur in the conjunction tree of `w`. Projections walk the
    /// tree with AndE axioms joined by Cut; a compound target is rebuilt
    /// with AndI in its own association order.
    fn derive_part(&mut self, w: &Formula, ctx: &Context, part: &Formula) -> usize {
        if matches!(part, Formula::Top) {
            return self.kernel(seq(w.clone(), ctx, Formula::Top), Rule::Top, Vec::new());
        }
        if part == w {
            return self.kernel(seq(w.clone(), ctx, w.clone()), Rule::Id, Vec::new());
        }
        if let Some(path) = node_path(w, part) {
            let mut cur = w.clone();
            let mut line: Option<usize> = None;
            for dir in path {
                let (a, b) = match &cur {
                    Formula::And(a, b) => (a.as_ref().clone(), b.as_ref().clone()),
                    _ => unreachable!("paths follow conjunction nodes"),
                };
                let (child, rule) = if dir == 0 {
                    (a, Rule::AndE0)
                } else {
                    (b, Rule::AndE1)
                };
                let ax = self.kernel(seq(cur, ctx, child.clone()), rule, Vec::new());
                line = Some(match line {
                    None => ax,
                    Some(p) => {
                        self.kernel(seq(w.clone(), ctx, child.clone()), Rule::Cut, vec![p, ax])
                    }
                });
                cur = child;
            }
            return line.expect("part differs from w, so the path is nonempty");
        }
        let atoms = flatten_conjunction(part);
        assert!(
            atoms.len() >= 2,
            "projection target `{part}` does not occur in `{w}`"
        );
        let mut acc: Option<(Formula, usize)> = None;
        for atom in atoms {
            let l = self.derive_part(w, ctx, &atom);
            acc = Some(match acc {
                None => (atom, l),
                Some((f, fl)) => {
                    let joined = Formula::conj(vec![f, atom]);
                    let k = self.kernel(seq(w.clone(), ctx, joined.clone()), Rule::AndI, vec![fl, l]);
                    (joined, k)
                }
            });
        }
        acc.expect("compound part has conjuncts").1
    }
}

/// Preorder path (0 = left, 1 = right) to `part` as a node of `w`'s
/// conjunction tree.
fn node_path(w: &Formula, part: &Formula) -> Option<Vec<u8>> {
    fn go(cur: &Formula, part: &Formula, path: &mut Vec<u8>) -> bool {
        if cur == part {
            return true;
        }
        if let Formula::And(a, b) = cur {
            path.push(0);
            if go(a, part, path) {
                return true;
            }
            path.pop();
            path.push(1);
            if go(b, part, path) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut path = Vec::new();
    if go(w, part, &mut path) {
        Some(path)
    } else {
        None
    }
}

fn normal_axioms(theory: &Theory) -> Result<Vec<NormalHornSequent>, ChainError> {
    theory
        .axioms()
        .iter()
        .enumerate()
        .map(|(i, ax)| {
            NormalHornSequent::new(
                flatten_conjunction(ax.lhs()),
                ax.ctx().clone(),
                ax.rhs().clone(),
            )
            .map_err(|e| ChainError::NotNormalForm(format!("axiom {}: {e}", i + 1)))
        })
        .collect()
}

fn proposition_name(f: &Formula) -> Option<&str> {
    match f {
        Formula::Rel(name, args) if args.is_empty() => Some(name),
        _ => None,
    }
}

fn ensure_propositional(
    axioms: &[NormalHornSequent],
    sigma: &NormalHornSequent,
) -> Result<(), ChainError> {
    for nhs in axioms.iter().chain(std::iter::once(sigma)) {
        if !nhs.ctx().vars().is_empty() {
            return Err(ChainError::NotPropositional(format!(
                "context `{}` is nonempty",
                nhs.ctx()
            )));
        }
        for f in nhs.premises().iter().chain(std::iter::once(nhs.conclusion())) {
            match f {
                Formula::Top => {}
                Formula::Rel(_, args) if args.is_empty() => {}
                Formula::Rel(name, _) => {
                    return Err(ChainError::NotPropositional(format!(
                        "relation `{name}` takes arguments"
                    )));
                }
                other => {
                    return Err(ChainError::NotPropositional(format!(
                        "`{other}` is not a proposition symbol"
                    )));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Propositional forward chaining.

struct PropRun<'a> {
    em: Emitter,
    theory: &'a Theory,
    empty: Context,
    base: Formula,
    goal: Formula,
    w: Formula,
    /// Script and kernel lines of `base ⊢ w`; unset while `w == base`.
    lw: Option<(usize, usize)>,
    goal_line: Option<(usize, usize)>,
    history: Vec<String>,
    consumed: BTreeSet<String>,
    inferred: BTreeSet<String>,
    queue: VecDeque<String>,
    rows: Vec<TraceRow>,
}

impl PropRun<'_> {
    fn snapshot(&self) -> Vec<QueueEntry> {
        self.history
            .iter()
            .map(|s| QueueEntry {
                text: s.clone(),
                consumed: self.consumed.contains(s),
            })
            .collect()
    }

    /// Emit the script for one axiom whose counter reached zero: project its
    /// premise conjunction out of the queue history `w`, cite the axiom, cut,
    /// restrict to the goal premises, and extend `w` with the new symbol.
    fn fire(&mut self, i: usize) {
        let ax_seq = self.theory.axioms()[i].clone();
        let concl = ax_seq.rhs().clone();
        if matches!(concl, Formula::Top) {
            return;
        }
        let psi = ax_seq.lhs().clone();
        let a_k = self.em.derive_part(&self.w, &self.empty, &psi);
        let a_rule = if matches!(psi, Formula::Top) {
            "Top"
        } else if psi == self.w {
            "Id"
        } else {
            "AndE"
        };
        let a_s = self
            .em
            .script(seq(self.w.clone(), &self.empty, psi), a_rule, Vec::new());
        let b_k = self
            .em
            .kernel(ax_seq.clone(), Rule::Hypothesis(i + 1), Vec::new());
        let b_s = self
            .em
            .script(ax_seq, format!("Axiom {}", i + 1), Vec::new());
        let c_seq = seq(self.w.clone(), &self.empty, concl.clone());
        let c_k = self.em.kernel(c_seq.clone(), Rule::Cut, vec![a_k, b_k]);
        let c_s = self.em.script(c_seq, "Cut", vec![a_s, b_s]);
        let (c2_s, c2_k) = match self.lw {
            Some((lw_s, lw_k)) => {
                let sq = seq(self.base.clone(), &self.empty, concl.clone());
                let k = self.em.kernel(sq.clone(), Rule::Cut, vec![lw_k, c_k]);
                (self.em.script(sq, "Cut", vec![lw_s, c_s]), k)
            }
            None => (c_s, c_k),
        };
        let name = proposition_name(&concl)
            .expect("propositional conclusions are proposition symbols")
            .to_string();
        if concl == self.goal {
            if self.goal_line.is_none() {
                self.goal_line = Some((c2_s, c2_k));
            }
        } else if !self.history.contains(&name) {
            // The goal symbol never re-enters a premise (popping it ends the
            // search), so w need not absorb it; everything else does.
            if self.lw.is_none() {
                let sq = seq(self.base.clone(), &self.empty, self.base.clone());
                let k = self.em.kernel(sq.clone(), Rule::Id, Vec::new());
                let s = self.em.script(sq, "Id", Vec::new());
                self.lw = Some((s, k));
            }
            let (lw_s, lw_k) = self.lw.expect("just ensured");
            let new_w = Formula::conj(vec![self.w.clone(), concl.clone()]);
            let sq = seq(self.base.clone(), &self.empty, new_w.clone());
            let k = self.em.kernel(sq.clone(), Rule::AndI, vec![lw_k, c2_k]);
            let s = self.em.script(sq, "AndI", vec![lw_s, c2_s]);
            self.w = new_w;
            self.lw = Some((s, k));
        }
        if !self.history.contains(&name) {
            self.history.push(name.clone());
        }
        self.queue.push_back(name);
    }
}

/// Decide whether a normal-form propositional goal follows from the theory.
///
/// The queue starts with the goal's premise symbols and the conclusions of
/// premise-free axioms. Each axiom keeps a counter of premise occurrences;
/// popping a symbol for the first time decrements every counter it occurs
/// in, and a counter reaching zero enqueues that axiom's conclusion. The
/// trace records one row per pop.
pub fn propositional_forward_chaining(
    theory: &Theory,
    sigma: &NormalHornSequent,
) -> Result<ChainResult, ChainError> {
    let axioms = normal_axioms(theory)?;
    ensure_propositional(&axioms, sigma)?;

    let base_seq = sigma.to_sequent();
    let goal = sigma.conclusion().clone();
    let mut em = Emitter::new();
    let empty = Context::new(Vec::new()).expect("empty context");

    if matches!(goal, Formula::Top) {
        em.kernel(base_seq.clone(), Rule::Top, Vec::new());
        em.script(base_seq, "Top", Vec::new());
        let row = TraceRow {
            lines: em.take(),
            ..TraceRow::default()
        };
        return Ok(ChainResult {
            derivable: true,
            trace: vec![row],
            derivation: Some(em.derivation),
        });
    }
    let goal_name = proposition_name(&goal)
        .expect("propositional goals are proposition symbols")
        .to_string();

    let mut run = PropRun {
        em,
        theory,
        empty,
        base: base_seq.lhs().clone(),
        goal: goal.clone(),
        w: base_seq.lhs().clone(),
        lw: None,
        goal_line: None,
        history: Vec::new(),
        consumed: BTreeSet::new(),
        inferred: BTreeSet::new(),
        queue: VecDeque::new(),
        rows: Vec::new(),
    };
    for p in sigma.premises() {
        if let Some(name) = proposition_name(p) {
            if !run.history.contains(&name.to_string()) {
                run.history.push(name.to_string());
            }
            run.queue.push_back(name.to_string());
        }
    }

    let mut counts: Vec<usize> = axioms
        .iter()
        .map(|ax| {
            ax.premises()
                .iter()
                .filter(|p| proposition_name(p).is_some())
                .count()
        })
        .collect();
    let mut init_fired = Vec::new();
    for (i, count) in counts.iter().enumerate() {
        if *count == 0 {
            run.fire(i);
            init_fired.push(i + 1);
        }
    }
    if !init_fired.is_empty() {
        run.rows.push(TraceRow {
            queue: run.snapshot(),
            popped: None,
            decrements: Vec::new(),
            fired: init_fired,
            lines: run.em.take(),
        });
    }

    let mut derivable = false;
    while let Some(u) = run.queue.pop_front() {
        run.consumed.insert(u.clone());
        let mut decrements = Vec::new();
        let mut fired = Vec::new();
        if u == goal_name {
            if run.goal_line.is_none() {
                let k = run.em.derive_part(&run.base, &run.empty, &run.goal);
                let rule = if run.base == run.goal { "Id" } else { "AndE" };
                let s = run
                    .em
                    .script(base_seq.clone(), rule, Vec::new());
                run.goal_line = Some((s, k));
            }
            run.rows.push(TraceRow {
                queue: run.snapshot(),
                popped: Some(u),
                decrements,
                fired,
                lines: run.em.take(),
            });
            derivable = true;
            break;
        }
        if run.inferred.insert(u.clone()) {
            for (i, ax) in axioms.iter().enumerate() {
                let occ = ax
                    .premises()
                    .iter()
                    .filter(|p| proposition_name(p) == Some(u.as_str()))
                    .count();
                if occ > 0 && counts[i] > 0 {
                    counts[i] -= occ.min(counts[i]);
                    decrements.push((i + 1, counts[i]));
                    if counts[i] == 0 {
                        fired.push(i + 1);
                        run.fire(i);
                    }
                }
            }
        }
        run.rows.push(TraceRow {
            queue: run.snapshot(),
            popped: Some(u),
            decrements,
            fired,
            lines: run.em.take(),
        });
    }

    if derivable {
        // Later fires may have appended lines past the goal; restate it so
        // the kernel derivation concludes with the goal sequent.
        let (_, goal_k) = run.goal_line.expect("derivable runs record the goal line");
        if run.em.derivation.lines.len() != goal_k {
            run.em.kernel(
                base_seq.clone(),
                Rule::Sub(Substitution::identity(), run.empty.clone()),
                vec![goal_k],
            );
        }
    }
    let derivation = if run.em.derivation.lines.is_empty() {
        None
    } else {
        Some(run.em.derivation)
    };
    Ok(ChainResult {
        derivable,
        trace: run.rows,
        derivation,
    })
}

// ---------------------------------------------------------------------
// Closed sorts.

/// Whether some closed term of sort `a` exists. Same counter loop as the
/// propositional search, one level down: constants seed the queue, and a
/// function whose argument sorts have all closed closes its result sort.
pub fn sort_closed(sig: &Signature, a: &SortName) -> Result<bool, ChainError> {
    if !sig.sorts().contains(a) {
        return Err(ChainError::UnknownSort(a.clone()));
    }
    let mut queue: VecDeque<SortName> = sig
        .functions()
        .iter()
        .filter(|f| f.arg_types.is_empty())
        .map(|f| f.result.clone())
        .collect();
    let mut closed: BTreeSet<SortName> = BTreeSet::new();
    let mut counts: Vec<usize> = sig.functions().iter().map(|f| f.arg_types.len()).collect();
    while let Some(s) = queue.pop_front() {
        if s == *a {
            return Ok(true);
        }
        if !closed.insert(s.clone()) {
            continue;
        }
        for (i, f) in sig.functions().iter().enumerate() {
            let occ = f.arg_types.iter().filter(|t| **t == s).count();
            if occ > 0 && counts[i] > 0 {
                counts[i] -= occ.min(counts[i]);
                if counts[i] == 0 {
                    queue.push_back(f.result.clone());
                }
            }
        }
    }
    Ok(false)
}

/// A minimal-depth closed term of sort `a`, ties broken by declaration
/// order; `None` when the sort is not closed (or not declared).
pub fn closed_term_witness(sig: &Signature, a: &SortName) -> Option<Term> {
    let mut best: BTreeMap<SortName, Term> = BTreeMap::new();
    loop {
        let mut round: Vec<(SortName, Term)> = Vec::new();
        for f in sig.functions() {
            if best.contains_key(&f.result) || round.iter().any(|(s, _)| *s == f.result) {
                continue;
            }
            let args: Option<Vec<Term>> = f
                .arg_types
                .iter()
                .map(|t| best.get(t).cloned())
                .collect();
            if let Some(args) = args {
                round.push((f.result.clone(), Term::app(f.name.clone(), args)));
            }
        }
        if round.is_empty() {
            return best.get(a).cloned();
        }
        best.extend(round);
    }
}

// ---------------------------------------------------------------------
// First-order forward chaining.

/// Lexicographic tuples of fact indices, repetition allowed: every way to
/// feed `arity` premises from a queue of length `len`.
pub(crate) fn enumerate_premise_tuples(
    len: usize,
    arity: usize,
) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = if arity == 0 {
        Some(Vec::new())
    } else if len == 0 {
        None
    } else {
        Some(vec![0; arity])
    };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        cur = {
            let mut nxt = out.clone();
            let mut pos = nxt.len();
            loop {
                if pos == 0 {
                    break None;
                }
                pos -= 1;
                nxt[pos] += 1;
                if nxt[pos] < len {
                    break Some(nxt);
                }
                nxt[pos] = 0;
            }
        };
        Some(out)
    })
}

/// A queued fact plus how it was established: `prov` is a sequent
/// `Λ ⊢_{u⃗} φ` whose right side and context are the fact, `line`/`k_line`
/// locate it in the script and the kernel derivation. Facts seeded straight
/// from premise-free axioms carry no script line until first displayed.
#[derive(Clone)]
struct Fact {
    fic: FormulaInContext,
    prov: Sequent,
    line: Option<usize>,
    k_line: usize,
    top_axiom: Option<usize>,
}

/// Facts are the same when their contexts match positionally (same length
/// and sorts) and the formulas agree after renaming one context onto the
/// other.
fn same_fact(a: &FormulaInContext, b: &FormulaInContext) -> bool {
    let (ac, bc) = (a.ctx().vars(), b.ctx().vars());
    if ac.len() != bc.len() {
        return false;
    }
    if ac.iter().zip(bc).any(|(x, y)| x.sort() != y.sort()) {
        return false;
    }
    if ac == bc {
        return alpha_equivalent(a.formula(), b.formula());
    }
    let pairs = ac
        .iter()
        .zip(bc)
        .map(|(x, y)| (Term::var(x.clone()), y.clone()))
        .collect();
    let ren = Substitution::new(pairs).expect("context variables are distinct");
    alpha_equivalent(a.formula(), &apply_formula(b.formula(), &ren))
}

fn rebase_seq(prov: &Sequent, theta: &Substitution, v: &Context) -> Sequent {
    seq(
        apply_formula(prov.lhs(), theta),
        v,
        apply_formula(prov.rhs(), theta),
    )
}

/// Context every expression lands in after `theta`, starting from `ctx`:
/// the canonical context of the extended substitution's terms.
fn ctx_after(ctx: &Context, theta: &Substitution) -> Context {
    let terms: Vec<Term> = theta.extend(ctx).terms().cloned().collect();
    canonical_context_of_terms(&terms)
}

struct FoRun<'a> {
    em: Emitter,
    theory: &'a Theory,
    sig: &'a Signature,
    goal: Sequent,
    goal_fic: FormulaInContext,
    facts: Vec<Fact>,
    rows: Vec<TraceRow>,
}

impl FoRun<'_> {
    fn snapshot(&self) -> Vec<QueueEntry> {
        self.facts
            .iter()
            .map(|f| QueueEntry {
                text: f.fic.to_string(),
                consumed: false,
            })
            .collect()
    }

    fn close_row(&mut self, fired: Vec<usize>) {
        self.rows.push(TraceRow {
            queue: self.snapshot(),
            popped: None,
            decrements: Vec::new(),
            fired,
            lines: self.em.take(),
        });
    }

    fn is_novel(&self, cand: &FormulaInContext) -> bool {
        !self.facts.iter().any(|f| same_fact(&f.fic, cand))
    }

    /// Script line establishing the fact's provenance, materializing a
    /// premise-free axiom's sequent on first display.
    fn ensure_line(&mut self, j: usize) -> usize {
        if let Some(l) = self.facts[j].line {
            return l;
        }
        let ax = self.facts[j]
            .top_axiom
            .expect("only premise-free axiom facts lack script lines");
        let prov = self.facts[j].prov.clone();
        let s = self.em.script(prov, format!("Axiom {ax}"), Vec::new());
        self.facts[j].line = Some(s);
        s
    }

    /// Emit one fire of axiom `i` under unifier `theta` against the facts in
    /// `tuple` (one per non-top premise, in order), concluding the new fact
    /// `cand`. Rebases every used fact's provenance into the shared result
    /// context, instantiates the axiom, rejoins the premises with AndI, and
    /// cuts; the new fact's left side is the joined fact provenance.
    fn fire(&mut self, i: usize, prem_forms: &[Formula], tuple: &[usize], theta: &Substitution, cand: FormulaInContext) {
        let v = cand.ctx().clone();
        let ax_seq = self.theory.axioms()[i].clone();
        let mut order: Vec<usize> = Vec::new();
        for &j in tuple {
            if !order.contains(&j) {
                order.push(j);
            }
        }
        // (script, kernel, sequent over lam) per used fact
        let mut lines: BTreeMap<usize, (Option<usize>, usize, Sequent)> = BTreeMap::new();

        for &j in &order {
            if matches!(self.facts[j].prov.lhs(), Formula::Top) {
                continue;
            }
            self.ensure_line(j);
            let f = self.facts[j].clone();
            let rb = rebase_seq(&f.prov, theta, &v);
            debug_assert_eq!(apply_formula_in_context(&f.fic, theta).ctx(), &v);
            let entry = if rb == f.prov {
                (f.line, f.k_line, rb)
            } else {
                let k = self
                    .em
                    .kernel(rb.clone(), Rule::Sub(theta.clone(), v.clone()), vec![f.k_line]);
                let s = self.em.script(
                    rb.clone(),
                    format!("Apply {theta} to"),
                    vec![f.line.expect("ensured above")],
                );
                (Some(s), k, rb)
            };
            lines.insert(j, entry);
        }

        let inst = rebase_seq(&ax_seq, theta, &v);
        let (ax_s, ax_k) = if inst == ax_seq {
            let k = self
                .em
                .kernel(ax_seq.clone(), Rule::Hypothesis(i + 1), Vec::new());
            (
                self.em.script(ax_seq.clone(), format!("Axiom {}", i + 1), Vec::new()),
                k,
            )
        } else {
            let h = self
                .em
                .kernel(ax_seq.clone(), Rule::Hypothesis(i + 1), Vec::new());
            let k = self
                .em
                .kernel(inst.clone(), Rule::Sub(theta.clone(), v.clone()), vec![h]);
            (
                self.em.script(
                    inst.clone(),
                    format!("Apply {theta} to Axiom {}", i + 1),
                    Vec::new(),
                ),
                k,
            )
        };

        let mut distinct: Vec<Formula> = Vec::new();
        for &j in &order {
            let lhs_t = apply_formula(self.facts[j].prov.lhs(), theta);
            if !matches!(lhs_t, Formula::Top) && !distinct.contains(&lhs_t) {
                distinct.push(lhs_t);
            }
        }
        let lam = Formula::conj(distinct.clone());

        let mut top_line: Option<(usize, usize)> = None;
        for &j in &order {
            if !matches!(self.facts[j].prov.lhs(), Formula::Top) {
                continue;
            }
            if !matches!(lam, Formula::Top) && top_line.is_none() {
                let sq = seq(lam.clone(), &v, Formula::Top);
                let k = self.em.kernel(sq.clone(), Rule::Top, Vec::new());
                top_line = Some((self.em.script(sq, "Top", Vec::new()), k));
            }
            let f = self.facts[j].clone();
            let rb = rebase_seq(&f.prov, theta, &v);
            debug_assert_eq!(apply_formula_in_context(&f.fic, theta).ctx(), &v);
            let (mut s_j, mut k_j) = if rb == f.prov {
                (f.line, f.k_line)
            } else {
                let k = self
                    .em
                    .kernel(rb.clone(), Rule::Sub(theta.clone(), v.clone()), vec![f.k_line]);
                let s = f
                    .line
                    .map(|l| self.em.script(rb.clone(), format!("Apply {theta} to"), vec![l]));
                (s, k)
            };
            let mut sq_j = rb;
            if let Some((t_s, t_k)) = top_line {
                let cut = seq(lam.clone(), &v, sq_j.rhs().clone());
                let k = self.em.kernel(cut.clone(), Rule::Cut, vec![t_k, k_j]);
                let cites: Vec<usize> = std::iter::once(t_s).chain(s_j).collect();
                let s = self.em.script(cut.clone(), "Cut", cites);
                s_j = Some(s);
                k_j = k;
                sq_j = cut;
            }
            lines.insert(j, (s_j, k_j, sq_j));
        }

        if distinct.len() >= 2 {
            // Facts can arrive with different instantiated provenances; join
            // them under the conjunction lam by projection and cut.
            for &j in &order {
                let (s_j, k_j, sq_j) = lines.get(&j).expect("every used fact has an entry").clone();
                if sq_j.lhs() == &lam {
                    continue;
                }
                let pk = self.em.derive_part(&lam, &v, sq_j.lhs());
                let ps = self
                    .em
                    .script(seq(lam.clone(), &v, sq_j.lhs().clone()), "AndE", Vec::new());
                let cut = seq(lam.clone(), &v, sq_j.rhs().clone());
                let k = self.em.kernel(cut.clone(), Rule::Cut, vec![pk, k_j]);
                let cites: Vec<usize> = std::iter::once(ps).chain(s_j).collect();
                let s = self.em.script(cut.clone(), "Cut", cites);
                lines.insert(j, (Some(s), k, cut));
            }
        }

        let mut tuple_iter = tuple.iter();
        let mut acc: Option<(Option<usize>, usize, Formula)> = None;
        for p in prem_forms {
            let (s_p, k_p, form_p) = if matches!(p, Formula::Top) {
                if top_line.is_none() {
                    let sq = seq(lam.clone(), &v, Formula::Top);
                    let k = self.em.kernel(sq.clone(), Rule::Top, Vec::new());
                    top_line = Some((self.em.script(sq, "Top", Vec::new()), k));
                }
                let (t_s, t_k) = top_line.expect("just ensured");
                (Some(t_s), t_k, Formula::Top)
            } else {
                let j = *tuple_iter.next().expect("one tuple slot per non-top premise");
                let (s_j, k_j, sq_j) = lines.get(&j).expect("every used fact has an entry");
                (*s_j, *k_j, sq_j.rhs().clone())
            };
            acc = Some(match acc {
                None => (s_p, k_p, form_p),
                Some((a_s, a_k, a_form)) => {
                    let joined = Formula::conj(vec![a_form, form_p]);
                    let sq = seq(lam.clone(), &v, joined.clone());
                    let k = self.em.kernel(sq.clone(), Rule::AndI, vec![a_k, k_p]);
                    let cites: Vec<usize> = [a_s, s_p].into_iter().flatten().collect();
                    let s = self.em.script(sq, "AndI", cites);
                    (Some(s), k, joined)
                }
            });
        }
        let (c_s, c_k, c_form) = acc.expect("fired axioms have at least one premise");
        debug_assert_eq!(c_form, apply_formula(ax_seq.lhs(), theta));

        let concl = seq(lam, &v, cand.formula().clone());
        let k = self.em.kernel(concl.clone(), Rule::Cut, vec![c_k, ax_k]);
        // A cut whose left premise is an undisplayed premise-free axiom
        // shows up as discharging top.
        let rule = if c_s.is_none() { "Top" } else { "Cut" };
        let cites: Vec<usize> = [c_s, Some(ax_s)].into_iter().flatten().collect();
        let s = self.em.script(concl.clone(), rule, cites);
        self.facts.push(Fact {
            fic: cand,
            prov: concl,
            line: Some(s),
            k_line: k,
            top_axiom: None,
        });
    }

    /// Try to turn fact `j` into the goal: unify the fact against the goal's
    /// right side (goal side must come out untouched), eliminate residual
    /// context variables via a same-sort goal variable or a closed term, and
    /// restate over the goal context. Emits only if the result is exactly
    /// the goal sequent.
    fn try_goal(&mut self, j: usize) -> bool {
        let f = self.facts[j].clone();
        let delta = match unify_formulae_in_context(
            self.sig,
            std::slice::from_ref(&f.fic),
            std::slice::from_ref(&self.goal_fic),
            &Substitution::identity(),
        )
        .into_unifier()
        {
            Some(d) => d,
            None => return false,
        };
        if &apply_formula(self.goal.rhs(), &delta) != self.goal.rhs() {
            return false;
        }
        let y = self.goal.ctx().clone();

        let dctx = ctx_after(f.fic.ctx(), &delta);
        let residuals: Vec<Variable> = dctx
            .vars()
            .iter()
            .filter(|v| !y.contains(v))
            .cloned()
            .collect();
        let mut var_subs = Vec::new();
        let mut term_subs = Vec::new();
        for r in residuals {
            if let Some(g) = y.vars().iter().find(|g| g.sort() == r.sort()) {
                var_subs.push(
                    Substitution::single(Term::var(g.clone()), r)
                        .expect("single pair is well-formed"),
                );
            } else if let Some(k) = closed_term_witness(self.sig, r.sort()) {
                term_subs.push(Substitution::single(k, r).expect("witness matches the sort"));
            } else {
                return false;
            }
        }
        var_subs.extend(term_subs);
        let subs = var_subs;

        let mut cur = f.prov.clone();
        let mut ops: Vec<(Substitution, Context, Sequent)> = Vec::new();
        let push_step = |theta: Substitution, ctx: Context, cur: &mut Sequent, ops: &mut Vec<(Substitution, Context, Sequent)>| {
            let nxt = seq(
                apply_formula(cur.lhs(), &theta),
                &ctx,
                apply_formula(cur.rhs(), &theta),
            );
            if *cur != nxt {
                ops.push((theta, ctx, nxt.clone()));
                *cur = nxt;
            }
        };
        if subs.is_empty() {
            push_step(delta, y.clone(), &mut cur, &mut ops);
        } else {
            push_step(delta, dctx, &mut cur, &mut ops);
            let last = subs.len() - 1;
            for (idx, s) in subs.into_iter().enumerate() {
                let ctx = if idx == last {
                    y.clone()
                } else {
                    ctx_after(cur.ctx(), &s)
                };
                push_step(s, ctx, &mut cur, &mut ops);
            }
        }

        let mut tail_top: Option<(Sequent, Sequent)> = None;
        if cur != self.goal {
            let rebasable = matches!(cur.lhs(), Formula::Top)
                && !matches!(self.goal.lhs(), Formula::Top)
                && cur.ctx() == &y
                && cur.rhs() == self.goal.rhs();
            if !rebasable {
                return false;
            }
            tail_top = Some((
                seq(self.goal.lhs().clone(), &y, Formula::Top),
                seq(self.goal.lhs().clone(), &y, cur.rhs().clone()),
            ));
        }

        let mut prev_s = self.ensure_line(j);
        let mut prev_k = self.facts[j].k_line;
        for (theta, ctx, sq) in ops {
            let k = self
                .em
                .kernel(sq.clone(), Rule::Sub(theta.clone(), ctx), vec![prev_k]);
            let s = self.em.script(sq, format!("{theta}"), vec![prev_s]);
            prev_s = s;
            prev_k = k;
        }
        if let Some((top_sq, cut_sq)) = tail_top {
            let t_k = self.em.kernel(top_sq.clone(), Rule::Top, Vec::new());
            let t_s = self.em.script(top_sq, "Top", Vec::new());
            let k = self.em.kernel(cut_sq.clone(), Rule::Cut, vec![t_k, prev_k]);
            self.em.script(cut_sq, "Cut", vec![t_s, prev_s]);
            let _ = k;
        }
        true
    }

    fn finish(self, derivable: bool) -> ChainResult {
        let derivation = if self.em.derivation.lines.is_empty() {
            None
        } else {
            Some(self.em.derivation)
        };
        ChainResult {
            derivable,
            trace: self.rows,
            derivation,
        }
    }
}

/// First-order Horn forward chaining.
///
/// The queue starts with the goal's premises over the goal context and the
/// conclusions of premise-free axioms. Each pass scans every axiom against
/// every tuple of queued facts (lexicographically, repetition allowed),
/// unifies the premise list in context, and enqueues the instantiated
/// conclusion when no stored fact already matches it up to context renaming.
/// Every new fact is tested against the goal; passes repeat while anything
/// new appeared, within `limits`.
pub fn forward_chaining(
    theory: &Theory,
    sigma: &NormalHornSequent,
    limits: IterationBudget,
) -> Result<ChainResult, ChainError> {
    let axioms = normal_axioms(theory)?;
    let sig = theory.signature();
    let goal_seq = sigma.to_sequent();

    let mut em = Emitter::new();
    if matches!(sigma.conclusion(), Formula::Top) {
        em.kernel(goal_seq.clone(), Rule::Top, Vec::new());
        em.script(goal_seq, "Top", Vec::new());
        let row = TraceRow {
            lines: em.take(),
            ..TraceRow::default()
        };
        return Ok(ChainResult {
            derivable: true,
            trace: vec![row],
            derivation: Some(em.derivation),
        });
    }

    let goal_fic = FormulaInContext::new(sigma.ctx().clone(), sigma.conclusion().clone())
        .expect("normal sequents fit their context");
    let mut run = FoRun {
        em,
        theory,
        sig,
        goal: goal_seq.clone(),
        goal_fic,
        facts: Vec::new(),
        rows: Vec::new(),
    };

    let mut init_hit = false;
    let mut init_fired = Vec::new();
    for p in sigma.premises() {
        if matches!(p, Formula::Top) {
            continue;
        }
        let fic = FormulaInContext::new(sigma.ctx().clone(), p.clone())
            .expect("normal sequents fit their context");
        if !run.is_novel(&fic) {
            continue;
        }
        let k = run.em.derive_part(goal_seq.lhs(), sigma.ctx(), p);
        let rule = if goal_seq.lhs() == p { "Id" } else { "AndE" };
        let prov = seq(goal_seq.lhs().clone(), sigma.ctx(), p.clone());
        let s = run.em.script(prov.clone(), rule, Vec::new());
        run.facts.push(Fact {
            fic,
            prov,
            line: Some(s),
            k_line: k,
            top_axiom: None,
        });
        if run.try_goal(run.facts.len() - 1) {
            init_hit = true;
            break;
        }
    }
    if !init_hit {
        for (i, ax) in axioms.iter().enumerate() {
            if ax.premises().iter().any(|p| !matches!(p, Formula::Top)) {
                continue;
            }
            if matches!(ax.conclusion(), Formula::Top) {
                continue;
            }
            let fic = FormulaInContext::new(ax.ctx().clone(), ax.conclusion().clone())
                .expect("normal sequents fit their context");
            if !run.is_novel(&fic) {
                continue;
            }
            let k = run
                .em
                .kernel(theory.axioms()[i].clone(), Rule::Hypothesis(i + 1), Vec::new());
            run.facts.push(Fact {
                fic,
                prov: theory.axioms()[i].clone(),
                line: None,
                k_line: k,
                top_axiom: Some(i + 1),
            });
            init_fired.push(i + 1);
            if run.try_goal(run.facts.len() - 1) {
                init_hit = true;
                break;
            }
        }
    }
    run.close_row(init_fired);
    if init_hit {
        return Ok(run.finish(true));
    }

    let attempt_cap = limits.passes.saturating_mul(limits.queue);
    let mut attempts = 0usize;
    let mut passes = 0usize;
    let mut new_flag = true;
    while new_flag {
        passes += 1;
        if passes > limits.passes {
            return Err(ChainError::BudgetExhausted {
                passes: passes - 1,
                queue: run.facts.len(),
            });
        }
        new_flag = false;
        for (i, ax) in axioms.iter().enumerate() {
            if matches!(ax.conclusion(), Formula::Top) {
                continue;
            }
            let prem_forms: Vec<Formula> = ax.premises().to_vec();
            let prem_fics: Vec<FormulaInContext> = prem_forms
                .iter()
                .filter(|p| !matches!(p, Formula::Top))
                .map(|p| {
                    FormulaInContext::new(ax.ctx().clone(), p.clone())
                        .expect("normal sequents fit their context")
                })
                .collect();
            let n = prem_fics.len();
            if n == 0 {
                continue;
            }
            let m = run.facts.len();
            for tuple in enumerate_premise_tuples(m, n) {
                attempts += 1;
                if attempts > attempt_cap {
                    return Err(ChainError::BudgetExhausted {
                        passes,
                        queue: run.facts.len(),
                    });
                }
                let fact_fics: Vec<FormulaInContext> =
                    tuple.iter().map(|&j| run.facts[j].fic.clone()).collect();
                let theta = match unify_formulae_in_context(
                    sig,
                    &prem_fics,
                    &fact_fics,
                    &Substitution::identity(),
                )
                .into_unifier()
                {
                    Some(t) => t,
                    None => continue,
                };
                let concl_fic = FormulaInContext::new(ax.ctx().clone(), ax.conclusion().clone())
                    .expect("normal sequents fit their context");
                let cand = apply_formula_in_context(&concl_fic, &theta);
                if !run.is_novel(&cand) {
                    continue;
                }
                run.fire(i, &prem_forms, &tuple, &theta, cand);
                new_flag = true;
                if run.facts.len() > limits.queue {
                    return Err(ChainError::BudgetExhausted {
                        passes,
                        queue: run.facts.len(),
                    });
                }
                let hit = run.try_goal(run.facts.len() - 1);
                run.close_row(vec![i + 1]);
                if hit {
                    return Ok(run.finish(true));
                }
            }
        }
    }
    Ok(run.finish(false))
}
