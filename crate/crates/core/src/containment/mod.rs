//! Homomorphisms, cores, and containment under dependencies.

pub mod canon;
pub mod hom;
pub mod rewrite;

use serde::Serialize;
use thiserror::Error;

use crate::chase::{chase_query, ChaseError, ChasePolicy, ChaseStatus};
use crate::model::{canonical_database, Cq, DependencySet, Ucq};
use hom::{apply_atom, cq_homomorphism, find_homomorphism, pin, AtomIndex, Mapping};
pub use rewrite::{rewrite_height_bound, ucq_rewrite, RewriteSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownReason {
    Budget,
    UnsupportedClass,
    UndecidableClass,
}

impl std::fmt::Display for UnknownReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UnknownReason::Budget => "budget",
            UnknownReason::UnsupportedClass => "unsupported-class",
            UnknownReason::UndecidableClass => "undecidable-class",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriState {
    Yes,
    No,
    Unknown(UnknownReason),
}

impl TriState {
    pub fn from_bool(b: bool) -> TriState {
        if b {
            TriState::Yes
        } else {
            TriState::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == TriState::Yes
    }

    /// Conjunction: `No` dominates, then `Unknown`.
    pub fn and(self, other: TriState) -> TriState {
        match (self, other) {
            (TriState::No, _) | (_, TriState::No) => TriState::No,
            (TriState::Unknown(r), _) | (_, TriState::Unknown(r)) => TriState::Unknown(r),
            _ => TriState::Yes,
        }
    }
}

impl std::fmt::Display for TriState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TriState::Yes => f.write_str("yes"),
            TriState::No => f.write_str("no"),
            TriState::Unknown(r) => write!(f, "unknown({r})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Engine {
    Chase,
    Rewrite,
    #[default]
    Auto,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContainmentError {
    #[error("queries have different numbers of free variables ({0} vs {1})")]
    Arity(usize, usize),
    #[error("rewriting needs a non-recursive or sticky set of tgds")]
    Unsupported,
    #[error(transparent)]
    Chase(#[from] ChaseError),
}

/// Minimal equivalent subquery, obtained by repeated retraction.
pub fn core(q: &Cq) -> Cq {
    let mut cur = q.clone();
    let fix: Mapping = cur.free_terms().into_iter().map(|t| (t.clone(), t)).collect();
    'shrink: loop {
        for drop in 0..cur.len() {
            let rest: Vec<_> = cur
                .atoms()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, a)| a.clone())
                .collect();
            if let Some(h) = find_homomorphism(cur.atoms(), &AtomIndex::new(&rest), &fix) {
                let image = cur.atoms().iter().map(|a| apply_atom(&h, a));
                cur = Cq::from_parts(cur.name.clone(), cur.free.clone(), image);
                continue 'shrink;
            }
        }
        return cur;
    }
}

fn check_arity(q: &Cq, q2: &Cq) -> Result<(), ContainmentError> {
    if q.free.len() != q2.free.len() {
        return Err(ContainmentError::Arity(q.free.len(), q2.free.len()));
    }
    Ok(())
}

/// `q ⊆_Σ q2` by chasing `q` and looking for `q2` at the frozen tuple.
pub fn contains_chase(q: &Cq, q2: &Cq, deps: &DependencySet, policy: &ChasePolicy) -> Result<TriState, ContainmentError> {
    check_arity(q, q2)?;
    let (res, tuple) = chase_query(q, deps, policy)?;
    if res.status == ChaseStatus::Failed {
        return Ok(TriState::Yes);
    }
    let hit = pin(&q2.free_terms(), &tuple)
        .and_then(|fix| find_homomorphism(q2.atoms(), &AtomIndex::from_instance(&res.instance), &fix))
        .is_some();
    Ok(match (hit, res.status) {
        (true, _) => TriState::Yes,
        (false, ChaseStatus::Saturated) => TriState::No,
        _ => TriState::Unknown(UnknownReason::Budget),
    })
}

/// `q ⊆_Σ q2` by evaluating the rewriting of `q2` over the canonical
/// database of `q`.
pub fn contains_rewrite(q: &Cq, q2: &Cq, deps: &DependencySet) -> Result<TriState, ContainmentError> {
    check_arity(q, q2)?;
    let rs = ucq_rewrite(&Ucq::single(q2.clone()), deps, None)?;
    Ok(contains_rewrite_with(q, &rs))
}

/// Membership of `q`'s frozen tuple in a precomputed rewriting.
pub fn contains_rewrite_with(q: &Cq, rs: &RewriteSet) -> TriState {
    let (inst, tuple) = canonical_database(q);
    let idx = AtomIndex::from_instance(&inst);
    let hit = rs.disjuncts.iter().any(|d| {
        pin(&d.free_terms(), &tuple)
            .and_then(|fix| find_homomorphism(d.atoms(), &idx, &fix))
            .is_some()
    });
    match (hit, rs.saturated) {
        (true, _) => TriState::Yes,
        (false, true) => TriState::No,
        (false, false) => TriState::Unknown(UnknownReason::Budget),
    }
}

/// Engine chosen by `Engine::Auto` for a dependency set.
pub fn auto_engine(deps: &DependencySet) -> Engine {
    let l = deps.labels();
    if !deps.tgds.is_empty() && deps.egds.is_empty() && !l.terminating_chase && l.sticky {
        Engine::Rewrite
    } else {
        Engine::Chase
    }
}

/// `q ⊆_Σ q2` with the requested engine.
pub fn contains(
    q: &Cq,
    q2: &Cq,
    deps: &DependencySet,
    engine: Engine,
    policy: &ChasePolicy,
) -> Result<TriState, ContainmentError> {
    if deps.is_empty() {
        check_arity(q, q2)?;
        return Ok(TriState::from_bool(cq_homomorphism(q2, q).is_some()));
    }
    let engine = match engine {
        Engine::Auto => auto_engine(deps),
        e => e,
    };
    match engine {
        Engine::Rewrite => contains_rewrite(q, q2, deps),
        _ => match contains_chase(q, q2, deps, policy) {
            Err(ContainmentError::Chase(ChaseError::BudgetRequired)) if !policy.has_budget() => {
                Ok(TriState::Unknown(UnknownReason::Budget))
            }
            other => other,
        },
    }
}

/// Both containments.
pub fn equivalent(
    q: &Cq,
    q2: &Cq,
    deps: &DependencySet,
    engine: Engine,
    policy: &ChasePolicy,
) -> Result<TriState, ContainmentError> {
    let a = contains(q, q2, deps, engine, policy)?;
    if a == TriState::No {
        return Ok(a);
    }
    Ok(a.and(contains(q2, q, deps, engine, policy)?))
}
