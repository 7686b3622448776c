//! Semantic acyclicity: is a query equivalent, under a set of
//! dependencies, to some acyclic query?
//!
//! The search enumerates acyclic candidates up to a class-specific size
//! bound and checks both containments. Every candidate must map into the
//! chase of the input at its answer tuple, and that property survives
//! dropping atoms, so it is used to prune the enumeration level by level.

mod approx;
mod connect;
mod enumerate;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::acyclicity::is_acyclic_cq;
use crate::chase::{chase_query, ChaseError, ChasePolicy, ChaseStatus};
use crate::containment::hom::{cq_homomorphism, find_homomorphism, pin, AtomIndex, Mapping};
use crate::containment::{
    contains, contains_rewrite_with, core, equivalent, rewrite_height_bound, ucq_rewrite, ContainmentError, Engine,
    RewriteSet, TriState, UnknownReason,
};
use crate::model::{canonical_database, name, Cq, DependencySet, Name, Term, Ucq};
use crate::parser::{serialize_cq, serialize_ucq};

pub use approx::{acyclic_approximations, Approximations};
pub use connect::{conjunction_reduction, connect, ConnectError};
pub use enumerate::{enumerate_acyclic_candidates, CandidateStream};

/// Depth used for chases that need a budget when none is given.
pub const DEFAULT_CHASE_DEPTH: usize = 4;
const DEFAULT_CHASE_STEPS: usize = 50_000;

#[derive(Debug, Error)]
pub enum SemAcError {
    #[error("dependency sets mixing tgds and egds are not supported")]
    Mixed,
    #[error("semantic acyclicity is undecidable for {0}; use --force-bound for a bounded search")]
    Undecidable(String),
    #[error("unsupported dependency class: {0}")]
    Unsupported(String),
    #[error("the query contains constants")]
    Constants,
    #[error("witness failed re-verification: {0}")]
    Verification(String),
    #[error(transparent)]
    Containment(#[from] ContainmentError),
    #[error(transparent)]
    Chase(#[from] ChaseError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// No dependencies: the core decides.
    Empty,
    /// Witnesses contain a homomorphic image of the query.
    AcyclicityPreserving,
    /// Containment through UCQ rewriting.
    Rewritable,
    /// Best-effort bounded search outside the supported classes.
    Forced,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SizeBound {
    pub class_used: String,
    pub strategy: Strategy,
    /// Witness size bound, in atoms.
    pub b: u128,
    /// Number of predicates in the query and the dependencies.
    pub p: usize,
    /// Largest arity.
    pub a: usize,
    /// Largest dependency body.
    pub body_size: usize,
}

/// Witness size bound for `q` under `deps`.
pub fn size_bound(q: &Cq, deps: &DependencySet) -> Result<SizeBound, SemAcError> {
    let mut preds = deps.predicates();
    preds.extend(q.predicates());
    let p = preds.len();
    let a = preds.values().copied().max().unwrap_or(0);
    let n = q.len() as u128;
    let l = deps.labels();
    let (class_used, strategy, b) = if deps.is_mixed() {
        return Err(SemAcError::Mixed);
    } else if deps.is_empty() {
        ("empty", Strategy::Empty, n)
    } else if deps.egds.is_empty() {
        if l.guarded && l.single_head_existentials {
            let label = if l.inclusion_dependency {
                "inclusion-dependencies"
            } else if l.linear {
                "linear"
            } else {
                "guarded"
            };
            (label, Strategy::AcyclicityPreserving, 2 * n)
        } else if l.non_recursive || l.sticky {
            let label = if l.non_recursive { "non-recursive" } else { "sticky" };
            let f = rewrite_height_bound(q, deps);
            (label, Strategy::Rewritable, f.saturating_mul(2))
        } else if l.full {
            return Err(SemAcError::Undecidable("full tgds".into()));
        } else {
            return Err(SemAcError::Unsupported(
                "tgds that are neither guarded with single-atom existentials, non-recursive, nor sticky".into(),
            ));
        }
    } else if l.k2_key {
        ("k2-keys", Strategy::AcyclicityPreserving, 2 * n)
    } else if l.unary_fd {
        ("unary-fds", Strategy::AcyclicityPreserving, 2 * n)
    } else {
        return Err(SemAcError::Unsupported(
            "egds other than keys over arity <= 2 or unary functional dependencies".into(),
        ));
    };
    Ok(SizeBound {
        class_used: class_used.into(),
        strategy,
        b,
        p,
        a,
        body_size: deps.max_body_size(),
    })
}

#[derive(Clone, Debug)]
pub struct SemAcOptions {
    /// Largest candidate size to try.
    pub bound: Option<usize>,
    /// Search up to the full bound for rewritable classes.
    pub exact_bound: bool,
    /// Run a bounded search for classes without a decision procedure.
    pub force: bool,
    /// Hom-from-query pruning; on by default for acyclicity-preserving classes.
    pub prune: Option<bool>,
    /// Chase policy for non-terminating sets.
    pub policy: Option<ChasePolicy>,
    /// Per-level cap on enumerated partial candidates.
    pub max_level_size: usize,
}

impl Default for SemAcOptions {
    fn default() -> Self {
        SemAcOptions {
            bound: None,
            exact_bound: false,
            force: false,
            prune: None,
            policy: None,
            max_level_size: 200_000,
        }
    }
}

/// One direction of an equivalence proof.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Proof {
    pub method: String,
    pub mapping: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Certificate {
    /// The query is contained in the witness.
    pub query_in_witness: Option<Proof>,
    /// The witness is contained in the query.
    pub witness_in_query: Option<Proof>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchReport {
    pub bound: Option<SizeBound>,
    /// Largest candidate size examined.
    pub searched_up_to: usize,
    pub candidates_checked: usize,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SemAcAnswer {
    Yes {
        witness: Cq,
        certificate: Certificate,
        report: SearchReport,
    },
    No {
        report: SearchReport,
    },
    Unknown {
        reason: UnknownReason,
        report: SearchReport,
    },
}

impl SemAcAnswer {
    pub fn is_yes(&self) -> bool {
        matches!(self, SemAcAnswer::Yes { .. })
    }

    pub fn verdict(&self) -> TriState {
        match self {
            SemAcAnswer::Yes { .. } => TriState::Yes,
            SemAcAnswer::No { .. } => TriState::No,
            SemAcAnswer::Unknown { reason, .. } => TriState::Unknown(*reason),
        }
    }

    pub fn witness(&self) -> Option<&Cq> {
        match self {
            SemAcAnswer::Yes { witness, .. } => Some(witness),
            _ => None,
        }
    }

    pub fn report(&self) -> &SearchReport {
        match self {
            SemAcAnswer::Yes { report, .. } | SemAcAnswer::No { report } | SemAcAnswer::Unknown { report, .. } => report,
        }
    }

    pub fn summary(&self) -> String {
        self.verdict().to_string()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (witness, certificate) = match self {
            SemAcAnswer::Yes {
                witness, certificate, ..
            } => (json!(serialize_cq(witness)), json!(certificate)),
            _ => (serde_json::Value::Null, serde_json::Value::Null),
        };
        json!({
            "answer": self.summary(),
            "witness": witness,
            "certificate": certificate,
            "diagnostics": self.report(),
        })
    }
}

fn default_policy(deps: &DependencySet, opts: &SemAcOptions) -> ChasePolicy {
    if let Some(p) = opts.policy {
        return p;
    }
    if deps.labels().terminating_chase {
        ChasePolicy::unbounded()
    } else {
        let mut p = ChasePolicy::depth(DEFAULT_CHASE_DEPTH);
        p.max_steps = Some(DEFAULT_CHASE_STEPS);
        p
    }
}

fn mapping_pairs(m: &Mapping) -> Vec<(String, String)> {
    m.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Evidence for `sub ⊆_Σ sup`, if one of the engines finds it.
fn prove(sub: &Cq, sup: &Cq, deps: &DependencySet, policy: &ChasePolicy, rs: Option<&RewriteSet>) -> Option<Proof> {
    if let Some(h) = cq_homomorphism(sup, sub) {
        return Some(Proof {
            method: "homomorphism".into(),
            mapping: mapping_pairs(&h),
        });
    }
    if deps.is_empty() {
        return None;
    }
    if let Some(rs) = rs {
        let (inst, tuple) = canonical_database(sub);
        let idx = AtomIndex::from_instance(&inst);
        for (i, d) in rs.disjuncts.iter().enumerate() {
            if let Some(h) = pin(&d.free_terms(), &tuple).and_then(|fix| find_homomorphism(d.atoms(), &idx, &fix)) {
                return Some(Proof {
                    method: format!("rewriting disjunct {i}"),
                    mapping: mapping_pairs(&h),
                });
            }
        }
    }
    let (res, tuple) = chase_query(sub, deps, policy).ok()?;
    if res.status == ChaseStatus::Failed {
        return Some(Proof {
            method: "chase failure".into(),
            mapping: Vec::new(),
        });
    }
    let idx = AtomIndex::from_instance(&res.instance);
    let h = pin(&sup.free_terms(), &tuple).and_then(|fix| find_homomorphism(sup.atoms(), &idx, &fix))?;
    Some(Proof {
        method: "chase".into(),
        mapping: mapping_pairs(&h),
    })
}

/// Renames canonical candidate variables back to the query's answer
/// variables, and existential ones to fresh names.
fn rename_witness(c: &Cq, q: &Cq) -> Cq {
    let mut distinct: Vec<Name> = Vec::new();
    for v in &q.free {
        if !distinct.contains(v) {
            distinct.push(v.clone());
        }
    }
    let mut cand_free: Vec<Name> = Vec::new();
    for v in &c.free {
        if !cand_free.contains(v) {
            cand_free.push(v.clone());
        }
    }
    let taken: BTreeSet<Name> = q.variables();
    let mut map: std::collections::BTreeMap<Name, Name> =
        cand_free.iter().cloned().zip(distinct.iter().cloned()).collect();
    let mut k = 0;
    for v in c.variables() {
        if map.contains_key(&v) {
            continue;
        }
        let fresh = loop {
            let n = name(&format!("Z{k}"));
            k += 1;
            if !taken.contains(&n) {
                break n;
            }
        };
        map.insert(v, fresh);
    }
    let sub = |t: &Term| match t {
        Term::Var(v) => Term::Var(map[v].clone()),
        other => other.clone(),
    };
    let free = c.free.iter().map(|v| map[v].clone()).collect();
    Cq::from_parts(q.name.clone(), free, c.atoms().iter().map(|a| a.map_terms(sub)))
}

fn yes(q: &Cq, witness: Cq, deps: &DependencySet, policy: &ChasePolicy, report: SearchReport) -> SemAcAnswer {
    let certificate = Certificate {
        query_in_witness: prove(q, &witness, deps, policy, None),
        witness_in_query: prove(&witness, q, deps, policy, None),
    };
    SemAcAnswer::Yes {
        witness,
        certificate,
        report,
    }
}

fn trivial_report(q: &Cq, deps: &DependencySet, note: &str) -> SearchReport {
    SearchReport {
        bound: size_bound(q, deps).ok(),
        searched_up_to: 0,
        candidates_checked: 0,
        notes: vec![note.to_string()],
    }
}

/// Merges answer variables that the chase of `q` identifies.
fn merge_free(q: &Cq, tuple: &[Term]) -> Option<Cq> {
    let mut rep: std::collections::BTreeMap<Name, Name> = Default::default();
    for (i, v) in q.free.iter().enumerate() {
        if let Some(j) = (0..i).find(|&j| tuple[j] == tuple[i] && q.free[j] != *v) {
            let target = rep.get(&q.free[j]).cloned().unwrap_or_else(|| q.free[j].clone());
            rep.insert(v.clone(), target);
        }
    }
    if rep.is_empty() {
        return None;
    }
    Some(q.substitute(|t| match t {
        Term::Var(v) => Term::Var(rep.get(v).cloned().unwrap_or_else(|| v.clone())),
        other => other.clone(),
    }))
}

enum Backward {
    Hom,
    Rewrite(RewriteSet),
    Contain,
}

/// Decides whether `q` is equivalent under `deps` to an acyclic query.
pub fn decide_semacyc(q: &Cq, deps: &DependencySet, opts: &SemAcOptions) -> Result<SemAcAnswer, SemAcError> {
    let deps = &deps.relevant_to(q.predicates().keys());
    let policy = default_policy(deps, opts);
    if is_acyclic_cq(q).is_some() {
        let report = trivial_report(q, deps, "query is acyclic");
        return Ok(yes(q, q.clone(), deps, &policy, report));
    }
    let core_q = core(q);
    if is_acyclic_cq(&core_q).is_some() {
        let report = trivial_report(q, deps, "core is acyclic");
        return Ok(yes(q, core_q, deps, &policy, report));
    }
    if deps.is_mixed() {
        return Err(SemAcError::Mixed);
    }
    if deps.is_empty() {
        return Ok(SemAcAnswer::No {
            report: trivial_report(q, deps, "core is cyclic"),
        });
    }

    let (res, tuple) = chase_query(&core_q, deps, &policy)?;
    let merged = merge_free(&core_q, &tuple).map(|m| core(&m));
    let (work, res, tuple) = match merged {
        Some(m) => {
            let (res, tuple) = chase_query(&m, deps, &policy)?;
            (m, res, tuple)
        }
        None => (core_q, res, tuple),
    };
    let bound = match size_bound(&work, deps) {
        Ok(b) => b,
        Err(SemAcError::Undecidable(_) | SemAcError::Unsupported(_)) if opts.force && deps.egds.is_empty() => {
            let mut preds = deps.predicates();
            preds.extend(work.predicates());
            SizeBound {
                class_used: "forced".into(),
                strategy: Strategy::Forced,
                b: (2 * work.len() + 4) as u128,
                p: preds.len(),
                a: preds.values().copied().max().unwrap_or(0),
                body_size: deps.max_body_size(),
            }
        }
        Err(SemAcError::Undecidable(c)) => {
            return Ok(SemAcAnswer::Unknown {
                reason: UnknownReason::UndecidableClass,
                report: SearchReport {
                    notes: vec![format!("semantic acyclicity is undecidable for {c}")],
                    ..Default::default()
                },
            })
        }
        Err(SemAcError::Unsupported(c)) => {
            return Ok(SemAcAnswer::Unknown {
                reason: UnknownReason::UnsupportedClass,
                report: SearchReport {
                    notes: vec![c],
                    ..Default::default()
                },
            })
        }
        Err(e) => return Err(e),
    };
    let exact = usize::try_from(bound.b).unwrap_or(usize::MAX);
    let practical = 2 * work.len() + 4;
    let (limit, limit_is_exact) = match (opts.bound, bound.strategy) {
        (Some(u), Strategy::Forced) => (u, false),
        (Some(u), _) => (u.min(exact), u >= exact),
        (None, Strategy::Rewritable) if opts.exact_bound => (exact, true),
        (None, Strategy::Rewritable) => (practical.min(exact), practical >= exact),
        (None, Strategy::Forced) => (practical, false),
        (None, _) => (exact, true),
    };

    let failed = res.status == ChaseStatus::Failed;
    let chase_complete = res.status != ChaseStatus::BudgetExhausted;
    let prune = bound.strategy == Strategy::AcyclicityPreserving && opts.prune.unwrap_or(true);
    let labels = deps.labels();
    let backward = if prune {
        Backward::Hom
    } else if bound.strategy == Strategy::Rewritable && !labels.terminating_chase {
        Backward::Rewrite(ucq_rewrite(&Ucq::single(work.clone()), deps, None)?)
    } else {
        Backward::Contain
    };

    let mut report = SearchReport {
        bound: Some(bound.clone()),
        ..Default::default()
    };
    if work.free != q.free {
        report.notes.push("answer variables merged by the chase".into());
    }

    let index = AtomIndex::from_instance(&res.instance);
    let admit = |c: &Cq| -> bool {
        if failed {
            return true;
        }
        pin(&c.free_terms(), &tuple)
            .and_then(|fix| find_homomorphism(c.atoms(), &index, &fix))
            .is_some()
    };
    let mut sig = deps.predicates();
    sig.extend(work.predicates());
    let mut levels = enumerate::Levels::new(&sig, &work.free, &work.constants(), Box::new(admit), opts.max_level_size);

    let undecided = AtomicBool::new(false);
    let checked = AtomicUsize::new(0);
    let notes: Mutex<BTreeSet<String>> = Mutex::new(BTreeSet::new());
    let check = |c: &Cq| -> bool {
        checked.fetch_add(1, Ordering::Relaxed);
        let back = match &backward {
            Backward::Hom => TriState::from_bool(cq_homomorphism(&work, c).is_some()),
            Backward::Rewrite(rs) => contains_rewrite_with(c, rs),
            Backward::Contain => match contains(c, &work, deps, Engine::Chase, &policy) {
                Ok(t) => t,
                Err(e) => {
                    notes.lock().unwrap().insert(e.to_string());
                    TriState::Unknown(UnknownReason::Budget)
                }
            },
        };
        match back {
            TriState::Yes => true,
            TriState::No => false,
            TriState::Unknown(_) => {
                undecided.store(true, Ordering::Relaxed);
                false
            }
        }
    };

    let mut exhausted = false;
    let mut found = None;
    while levels.level() < limit {
        let Some(finals) = levels.advance() else {
            exhausted = true;
            break;
        };
        report.searched_up_to = levels.level();
        if let Some(c) = finals.par_iter().find_first(|c| check(c)) {
            found = Some(c.clone());
            break;
        }
    }
    report.candidates_checked = checked.load(Ordering::Relaxed);
    report.notes.extend(notes.into_inner().unwrap());

    if let Some(c) = found {
        let witness = rename_witness(&c, &work);
        let verdict = equivalent(q, &witness, deps, Engine::Auto, &policy)?;
        if !verdict.is_yes() {
            return Err(SemAcError::Verification(format!(
                "{} is not equivalent to the query ({verdict})",
                serialize_cq(&witness)
            )));
        }
        let rs = match &backward {
            Backward::Rewrite(rs) => Some(rs),
            _ => None,
        };
        let certificate = Certificate {
            query_in_witness: prove(q, &witness, deps, &policy, None),
            witness_in_query: prove(&witness, q, deps, &policy, rs),
        };
        return Ok(SemAcAnswer::Yes {
            witness,
            certificate,
            report,
        });
    }

    if levels.truncated() {
        report.notes.push(format!("a level exceeded {} candidates", opts.max_level_size));
    }
    if !chase_complete {
        report.notes.push("the chase of the query did not saturate".into());
    }
    let complete = (exhausted || limit_is_exact)
        && chase_complete
        && !levels.truncated()
        && !undecided.load(Ordering::Relaxed)
        && bound.strategy != Strategy::Forced;
    if complete {
        Ok(SemAcAnswer::No { report })
    } else {
        if !limit_is_exact && !exhausted {
            report
                .notes
                .push(format!("search stopped at {limit} atoms below the bound {}", bound.b));
        }
        Ok(SemAcAnswer::Unknown {
            reason: UnknownReason::Budget,
            report,
        })
    }
}

/// How one disjunct of a UCQ was resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DisjunctOutcome {
    /// Contained in the disjunct with this index.
    Redundant(usize),
    Decided(Box<SemAcAnswer>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UcqSemAcAnswer {
    pub verdict: TriState,
    pub witness: Option<Ucq>,
    pub outcomes: Vec<DisjunctOutcome>,
}

impl UcqSemAcAnswer {
    pub fn to_json(&self) -> serde_json::Value {
        let outcomes: Vec<_> = self
            .outcomes
            .iter()
            .map(|o| match o {
                DisjunctOutcome::Redundant(j) => json!({ "redundant_in": j }),
                DisjunctOutcome::Decided(a) => a.to_json(),
            })
            .collect();
        json!({
            "answer": self.verdict.to_string(),
            "witness": self.witness.as_ref().map(serialize_ucq),
            "certificate": serde_json::Value::Null,
            "diagnostics": { "disjuncts": outcomes },
        })
    }
}

/// A UCQ is semantically acyclic iff each disjunct is, or is contained in
/// another disjunct that is kept.
pub fn decide_semacyc_ucq(
    q: &Ucq,
    deps: &DependencySet,
    opts: &SemAcOptions,
) -> Result<UcqSemAcAnswer, SemAcError> {
    let policy = default_policy(deps, opts);
    let n = q.disjuncts.len();
    let mut dropped = vec![false; n];
    let mut outcomes = Vec::with_capacity(n);
    let mut verdict = TriState::Yes;
    let mut witnesses = Vec::new();
    for i in 0..n {
        let qi = &q.disjuncts[i];
        let mut covered = None;
        for j in (0..n).filter(|&j| j != i && !dropped[j]) {
            let qj = &q.disjuncts[j];
            if contains(qi, qj, deps, Engine::Auto, &policy)? != TriState::Yes {
                continue;
            }
            // Among equivalent disjuncts keep acyclic ones, then earlier ones.
            if contains(qj, qi, deps, Engine::Auto, &policy)? == TriState::Yes {
                let (ai, aj) = (is_acyclic_cq(qi).is_some(), is_acyclic_cq(qj).is_some());
                if !(aj && !ai || ai == aj && j < i) {
                    continue;
                }
            }
            covered = Some(j);
            break;
        }
        if let Some(j) = covered {
            dropped[i] = true;
            outcomes.push(DisjunctOutcome::Redundant(j));
            continue;
        }
        let ans = decide_semacyc(qi, deps, opts)?;
        if let Some(w) = ans.witness() {
            witnesses.push(w.clone());
        }
        verdict = verdict.and(ans.verdict());
        outcomes.push(DisjunctOutcome::Decided(Box::new(ans)));
    }
    let witness = if verdict == TriState::Yes {
        Some(Ucq {
            name: q.name.clone(),
            disjuncts: witnesses,
        })
    } else {
        None
    };
    Ok(UcqSemAcAnswer {
        verdict,
        witness,
        outcomes,
    })
}
