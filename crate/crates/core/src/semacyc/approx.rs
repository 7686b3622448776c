//! Acyclic approximations: maximal acyclic queries contained in a query.

use std::collections::{BTreeMap, HashSet};

use crate::acyclicity::is_acyclic_cq;
use crate::chase::ChasePolicy;
use crate::containment::canon::canonical_key;
use crate::containment::hom::cq_homomorphism;
use crate::containment::{contains, contains_rewrite_with, ucq_rewrite, Engine, RewriteSet, TriState};
use crate::model::{name, Atom, Cq, DependencySet, Name, Term, Ucq};

use super::{size_bound, SemAcError, Strategy, DEFAULT_CHASE_DEPTH};

const MAX_PARTITIONS: usize = 50_000;
const MAX_EXTENDED: usize = 200;
const MAX_EXTRA_ATOMS: usize = 2;
const MAX_BLIND_LEVEL: usize = 5_000;

#[derive(Clone, Debug)]
pub struct Approximations {
    /// One representative per maximal equivalence class.
    pub maximal: Vec<Cq>,
    /// Every acyclic contained candidate that was considered.
    pub candidates: Vec<Cq>,
    pub seed: Cq,
}

/// The single-variable query with `R(x,…,x)` for each predicate of `q`.
pub fn seed(q: &Cq) -> Cq {
    let x = name("X");
    let atoms = q
        .predicates()
        .into_iter()
        .map(|(p, a)| Atom::new(&p, vec![Term::Var(x.clone()); a]));
    let free = vec![x.clone(); q.free.len()];
    Cq::from_parts(q.name.clone(), free, atoms.collect::<Vec<_>>())
}

/// Images of `r` under every partition of its variables.
fn images(r: &Cq) -> Vec<Cq> {
    fn go(vars: &[Name], i: usize, reps: &mut Vec<Name>, assign: &mut BTreeMap<Name, Name>, r: &Cq, out: &mut Vec<Cq>) {
        if out.len() >= MAX_PARTITIONS {
            return;
        }
        if i == vars.len() {
            out.push(r.substitute(|t| match t {
                Term::Var(v) => Term::Var(assign[v].clone()),
                other => other.clone(),
            }));
            return;
        }
        for k in 0..reps.len() {
            assign.insert(vars[i].clone(), reps[k].clone());
            go(vars, i + 1, reps, assign, r, out);
        }
        reps.push(vars[i].clone());
        assign.insert(vars[i].clone(), vars[i].clone());
        go(vars, i + 1, reps, assign, r, out);
        reps.pop();
    }
    let vars: Vec<Name> = r.variables().into_iter().collect();
    let mut out = Vec::new();
    go(&vars, 0, &mut Vec::new(), &mut BTreeMap::new(), r, &mut out);
    out
}

/// Adds up to two atoms of arity ≥ 3, each over at least three distinct
/// existing variables, until the query becomes acyclic.
fn covered_extensions(c: &Cq, sig: &BTreeMap<Name, usize>) -> Vec<Cq> {
    let wide: Vec<(&Name, usize)> = sig.iter().filter(|(_, &a)| a >= 3).map(|(p, &a)| (p, a)).collect();
    if wide.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut seen: HashSet<Cq> = HashSet::new();
    let mut frontier = vec![c.clone()];
    for _ in 0..MAX_EXTRA_ATOMS {
        let mut next = Vec::new();
        for cur in &frontier {
            let pool: Vec<Term> = cur.variables().into_iter().map(Term::Var).collect();
            for &(p, a) in &wide {
                let mut emit = |args: Vec<Term>| {
                    let atom = Atom {
                        predicate: p.clone(),
                        args,
                    };
                    let ext = Cq::from_parts(
                        cur.name.clone(),
                        cur.free.clone(),
                        cur.atoms().iter().cloned().chain(std::iter::once(atom)),
                    );
                    if out.len() < MAX_EXTENDED && seen.insert(canonical_key(&ext)) {
                        if is_acyclic_cq(&ext).is_some() {
                            out.push(ext);
                        } else {
                            next.push(ext);
                        }
                    }
                };
                let mut args = Vec::with_capacity(a);
                distinct_args(&pool, a, cur.len(), &mut args, &mut emit);
            }
        }
        frontier = next;
    }
    out
}

/// Arguments with pairwise distinct pool variables, at least three of
/// them, padded with fresh variables.
fn distinct_args(pool: &[Term], arity: usize, tag: usize, args: &mut Vec<Term>, emit: &mut impl FnMut(Vec<Term>)) {
    if args.len() == arity {
        if args.iter().filter(|t| pool.contains(t)).count() >= 3 {
            emit(args.clone());
        }
        return;
    }
    for t in pool {
        if !args.contains(t) {
            args.push(t.clone());
            distinct_args(pool, arity, tag, args, emit);
            args.pop();
        }
    }
    args.push(Term::Var(name(&format!("_w{tag}_{}", args.len()))));
    distinct_args(pool, arity, tag, args, emit);
    args.pop();
}

/// Maximal acyclic queries contained in `q` under `deps`, among candidates
/// built from homomorphic images of `q` (or of its rewriting), acyclic
/// covers of those images, and the seed.
pub fn acyclic_approximations(q: &Cq, deps: &DependencySet) -> Result<Approximations, SemAcError> {
    if !q.constants().is_empty() {
        return Err(SemAcError::Constants);
    }
    let deps = &deps.relevant_to(q.predicates().keys());
    let bound = size_bound(q, deps)?;
    let seed = seed(q);
    if is_acyclic_cq(q).is_some() {
        return Ok(Approximations {
            maximal: vec![q.clone()],
            candidates: vec![q.clone(), seed.clone()],
            seed,
        });
    }
    let policy = if deps.labels().terminating_chase {
        ChasePolicy::unbounded()
    } else {
        ChasePolicy::depth(DEFAULT_CHASE_DEPTH)
    };
    let rewriting: Option<RewriteSet> = match bound.strategy {
        Strategy::Rewritable => Some(ucq_rewrite(&Ucq::single(q.clone()), deps, None)?),
        _ => None,
    };
    let bases: Vec<Cq> = match &rewriting {
        Some(rs) => rs.disjuncts.clone(),
        None => vec![q.clone()],
    };
    let mut sig = deps.predicates();
    sig.extend(q.predicates());

    let mut raw: Vec<Cq> = vec![seed.clone()];
    for r in &bases {
        for img in images(r) {
            if is_acyclic_cq(&img).is_some() {
                raw.push(img);
            } else {
                raw.extend(covered_extensions(&img, &sig));
            }
        }
    }
    if bound.strategy == Strategy::AcyclicityPreserving {
        let mut levels = super::enumerate::Levels::new(&sig, &q.free, &Default::default(), Box::new(|_| true), MAX_BLIND_LEVEL);
        let depth = (2 * q.len()).min(q.len() + 1);
        while levels.level() < depth {
            match levels.advance() {
                Some(finals) => raw.extend(finals),
                None => break,
            }
        }
    }

    let contained = |c: &Cq, d: &Cq| -> bool {
        if deps.is_empty() {
            return cq_homomorphism(d, c).is_some();
        }
        matches!(contains(c, d, deps, Engine::Auto, &policy), Ok(TriState::Yes))
    };
    let in_q = |c: &Cq| -> bool {
        match &rewriting {
            Some(rs) => contains_rewrite_with(c, rs) == TriState::Yes,
            None => contained(c, q),
        }
    };

    let mut seen = HashSet::new();
    let mut candidates: Vec<Cq> = Vec::new();
    for c in raw {
        let key = canonical_key(&c);
        if seen.insert(key) && is_acyclic_cq(&c).is_some() && in_q(&c) {
            candidates.push(c);
        }
    }
    candidates.sort_by(|a, b| (a.len(), a.atoms()).cmp(&(b.len(), b.atoms())));

    // Candidates arrive smallest first, so the first member of each
    // equivalence class is the one kept.
    let mut maximal: Vec<Cq> = Vec::new();
    for c in &candidates {
        if maximal.iter().any(|m| contained(c, m)) {
            continue;
        }
        maximal.retain(|m| !contained(m, c));
        maximal.push(c.clone());
    }
    Ok(Approximations {
        maximal,
        candidates,
        seed,
    })
}
