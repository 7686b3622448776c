//! Level-wise enumeration of candidate queries, one per isomorphism class.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;

use crate::acyclicity::is_acyclic_cq;
use crate::containment::canon::canonical_key;
use crate::containment::hom::cq_homomorphism;
use crate::model::{name, Atom, Cq, Name, Term};

type Admit<'a> = Box<dyn Fn(&Cq) -> bool + Send + Sync + 'a>;

/// Breadth-first generator over queries with a fixed answer tuple.
///
/// Level `k` holds the canonical forms of all `k`-atom queries accepted by
/// `admit`. Each level is built by adding one atom to every member of the
/// previous one, so `admit` must be closed under taking subqueries for the
/// enumeration to be complete.
pub(crate) struct Levels<'a> {
    sig: Vec<(Name, usize)>,
    consts: Vec<Term>,
    frontier: Vec<Cq>,
    level: usize,
    admit: Admit<'a>,
    max_level_size: usize,
    truncated: bool,
}

impl<'a> Levels<'a> {
    pub(crate) fn new(
        sig: &BTreeMap<Name, usize>,
        free: &[Name],
        consts: &BTreeSet<Name>,
        admit: Admit<'a>,
        max_level_size: usize,
    ) -> Levels<'a> {
        let start = canonical_key(&Cq::from_parts(name("q"), free.to_vec(), []));
        Levels {
            sig: sig.iter().map(|(p, a)| (p.clone(), *a)).collect(),
            consts: consts.iter().map(|c| Term::Const(c.clone())).collect(),
            frontier: vec![start],
            level: 0,
            admit,
            max_level_size,
            truncated: false,
        }
    }

    pub(crate) fn level(&self) -> usize {
        self.level
    }

    /// True once some level was cut to `max_level_size`.
    pub(crate) fn truncated(&self) -> bool {
        self.truncated
    }

    /// Builds the next level and returns its complete candidates: those
    /// mentioning every answer variable and acyclic. `None` once the
    /// frontier is empty.
    pub(crate) fn advance(&mut self) -> Option<Vec<Cq>> {
        if self.frontier.is_empty() {
            return None;
        }
        let next: HashSet<Cq> = self
            .frontier
            .par_iter()
            .flat_map_iter(|p| extensions(p, &self.sig, &self.consts))
            .map(|c| canonical_key(&c))
            .collect();
        let admit = &self.admit;
        let mut next: Vec<Cq> = next.into_par_iter().filter(|c| admit(c)).collect();
        next.sort_by(|a, b| a.atoms().cmp(b.atoms()));
        if next.len() > self.max_level_size {
            next.truncate(self.max_level_size);
            self.truncated = true;
        }
        self.level += 1;
        let finals = next.iter().filter(|c| is_complete(c)).cloned().collect();
        self.frontier = next;
        Some(finals)
    }
}

fn is_complete(c: &Cq) -> bool {
    let vars = c.variables();
    c.free.iter().all(|v| vars.contains(v)) && is_acyclic_cq(c).is_some()
}

fn extensions(p: &Cq, sig: &[(Name, usize)], consts: &[Term]) -> Vec<Cq> {
    let mut pool: Vec<Term> = Vec::new();
    for v in &p.free {
        let t = Term::Var(v.clone());
        if !pool.contains(&t) {
            pool.push(t);
        }
    }
    let free: BTreeSet<&Name> = p.free.iter().collect();
    pool.extend(
        p.variables()
            .into_iter()
            .filter(|v| !free.contains(v))
            .map(Term::Var),
    );
    pool.extend(consts.iter().cloned());

    let mut out = Vec::new();
    for (pred, arity) in sig {
        let mut args = Vec::with_capacity(*arity);
        fill(&pool, *arity, 0, &mut args, &mut |args| {
            let atom = Atom {
                predicate: pred.clone(),
                args: args.to_vec(),
            };
            if !p.atoms().contains(&atom) {
                let atoms = p.atoms().iter().cloned().chain(std::iter::once(atom));
                out.push(Cq::from_parts(p.name.clone(), p.free.clone(), atoms));
            }
        });
    }
    out
}

fn fill(pool: &[Term], arity: usize, fresh: usize, args: &mut Vec<Term>, emit: &mut impl FnMut(&[Term])) {
    if args.len() == arity {
        emit(args);
        return;
    }
    for t in pool {
        args.push(t.clone());
        fill(pool, arity, fresh, args, emit);
        args.pop();
    }
    for j in 0..=fresh {
        args.push(Term::Var(name(&format!("_f{j}"))));
        fill(pool, arity, fresh.max(j + 1), args, emit);
        args.pop();
    }
}

/// Lazily yields every acyclic query with at most `bound` atoms over
/// `sig`, with answer tuple `free`, constants from `consts`, one per
/// isomorphism class, by increasing size. With `prune_hom_from = Some(q)`
/// only candidates that `q` maps into are yielded.
pub struct CandidateStream<'a> {
    levels: Levels<'a>,
    bound: usize,
    prune_hom_from: Option<&'a Cq>,
    buffer: std::vec::IntoIter<Cq>,
}

impl Iterator for CandidateStream<'_> {
    type Item = Cq;

    fn next(&mut self) -> Option<Cq> {
        loop {
            if let Some(c) = self.buffer.next() {
                return Some(c);
            }
            if self.levels.level() >= self.bound {
                return None;
            }
            let mut finals = self.levels.advance()?;
            if let Some(q) = self.prune_hom_from {
                finals.retain(|c| cq_homomorphism(q, c).is_some());
            }
            self.buffer = finals.into_iter();
        }
    }
}

pub fn enumerate_acyclic_candidates<'a>(
    sig: &BTreeMap<Name, usize>,
    free: &[Name],
    consts: &BTreeSet<Name>,
    bound: usize,
    prune_hom_from: Option<&'a Cq>,
) -> CandidateStream<'a> {
    CandidateStream {
        levels: Levels::new(sig, free, consts, Box::new(|_| true), usize::MAX),
        bound,
        prune_hom_from,
        buffer: Vec::new().into_iter(),
    }
}
