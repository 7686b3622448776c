//! Backward-chaining UCQ rewriting by piece unification.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::containment::canon::canonical_key;
use crate::containment::hom::cq_homomorphism;
use crate::containment::{core, ContainmentError};
use crate::model::{name, Atom, Cq, DependencySet, Name, Term, Tgd, Ucq};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteSet {
    /// Canonical disjuncts, pairwise non-subsumed.
    pub disjuncts: Vec<Cq>,
    /// Largest disjunct size.
    pub height: usize,
    /// `false` when the size bound discarded a rewriting.
    pub saturated: bool,
}

impl RewriteSet {
    pub fn to_ucq(&self, name: &str) -> Ucq {
        Ucq::new(name, self.disjuncts.iter().map(|d| d.with_name(name)).collect())
            .expect("rewrite sets are non-empty")
    }
}

const TGD_PREFIX: &str = "_t";

fn rename_apart(t: &Tgd) -> Tgd {
    let r = |x: &Term| match x {
        Term::Var(v) => Term::Var(name(&format!("{TGD_PREFIX}{v}"))),
        other => other.clone(),
    };
    Tgd {
        body: t.body.iter().map(|a| a.map_terms(r)).collect(),
        head: t.head.iter().map(|a| a.map_terms(r)).collect(),
    }
}

fn is_tgd_var(t: &Term) -> bool {
    matches!(t, Term::Var(v) if v.starts_with(TGD_PREFIX))
}

struct UnionFind {
    parent: HashMap<Term, Term>,
}

impl UnionFind {
    fn find(&mut self, t: &Term) -> Term {
        let mut cur = t.clone();
        while let Some(p) = self.parent.get(&cur) {
            if *p == cur {
                break;
            }
            cur = p.clone();
        }
        cur
    }

    fn union(&mut self, a: &Term, b: &Term) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return true;
        }
        match (ra.is_rigid(), rb.is_rigid()) {
            (true, true) => false,
            (true, false) => {
                self.parent.insert(rb, ra);
                true
            }
            _ => {
                self.parent.insert(ra, rb);
                true
            }
        }
    }
}

/// One rewriting step of `r` with `tgd` (already renamed apart) for the
/// atom subset `subset` mapped onto head atoms `targets`.
fn piece_step(r: &Cq, tgd: &Tgd, existentials: &BTreeSet<Term>, subset: &[usize], targets: &[usize]) -> Option<Cq> {
    let mut uf = UnionFind { parent: HashMap::new() };
    for (&ai, &hi) in subset.iter().zip(targets) {
        let (a, h) = (&r.atoms()[ai], &tgd.head[hi]);
        for (x, y) in a.args.iter().zip(&h.args) {
            if !uf.union(x, y) {
                return None;
            }
        }
    }
    let in_subset: BTreeSet<usize> = subset.iter().copied().collect();
    let outside: BTreeSet<&Name> = r
        .atoms()
        .iter()
        .enumerate()
        .filter(|(i, _)| !in_subset.contains(i))
        .flat_map(|(_, a)| a.variables())
        .collect();
    let free: BTreeSet<&Name> = r.free.iter().collect();

    let mut terms: BTreeSet<Term> = BTreeSet::new();
    for &ai in subset {
        terms.extend(r.atoms()[ai].args.iter().cloned());
    }
    for h in &tgd.head {
        terms.extend(h.args.iter().cloned());
    }
    let mut classes: HashMap<Term, Vec<Term>> = HashMap::new();
    for t in &terms {
        let root = uf.find(t);
        classes.entry(root).or_default().push(t.clone());
    }
    for z in existentials {
        let class = &classes[&uf.find(z)];
        for t in class {
            if t == z {
                continue;
            }
            let bad = match t {
                Term::Const(_) => true,
                t if is_tgd_var(t) => true,
                Term::Var(v) => free.contains(v) || outside.contains(v),
                _ => true,
            };
            if bad {
                return None;
            }
        }
    }
    // Representatives: constant, then free variable in tuple order, then
    // any query variable, then a tgd variable.
    let free_order: HashMap<&Name, usize> = r.free.iter().enumerate().rev().map(|(i, v)| (v, i)).collect();
    let mut rep: HashMap<Term, Term> = HashMap::new();
    for class in classes.values() {
        let best = class
            .iter()
            .min_by_key(|t| match t {
                Term::Const(_) => (0, 0, (*t).clone()),
                Term::Var(v) if free_order.contains_key(v) => (1, free_order[v], (*t).clone()),
                t if !is_tgd_var(t) => (2, 0, (*t).clone()),
                _ => (3, 0, (*t).clone()),
            })
            .expect("classes are non-empty")
            .clone();
        for t in class {
            rep.insert(t.clone(), best.clone());
        }
    }
    let theta = |t: &Term| rep.get(t).cloned().unwrap_or_else(|| t.clone());
    let mut new_free = Vec::with_capacity(r.free.len());
    for v in &r.free {
        match theta(&Term::Var(v.clone())) {
            Term::Var(w) => new_free.push(w),
            _ => return None,
        }
    }
    let atoms: Vec<Atom> = r
        .atoms()
        .iter()
        .enumerate()
        .filter(|(i, _)| !in_subset.contains(i))
        .map(|(_, a)| a.map_terms(theta))
        .chain(tgd.body.iter().map(|a| a.map_terms(theta)))
        .collect();
    Some(Cq::from_parts(r.name.clone(), new_free, atoms))
}

/// All one-step rewritings of `r` with `tgd`.
pub fn rewrite_step(r: &Cq, tgd: &Tgd) -> Vec<Cq> {
    let tgd = rename_apart(tgd);
    let existentials: BTreeSet<Term> = tgd.existentials().into_iter().map(Term::Var).collect();
    let head_preds: BTreeSet<(&Name, usize)> = tgd.head.iter().map(|h| (&h.predicate, h.arity())).collect();
    let eligible: Vec<usize> = (0..r.len())
        .filter(|&i| head_preds.contains(&(&r.atoms()[i].predicate, r.atoms()[i].arity())))
        .collect();
    let mut out = Vec::new();
    let m = eligible.len();
    if m > 20 {
        return out;
    }
    for mask in 1u32..(1 << m) {
        let subset: Vec<usize> = (0..m).filter(|b| mask & (1 << b) != 0).map(|b| eligible[b]).collect();
        let options: Vec<Vec<usize>> = subset
            .iter()
            .map(|&ai| {
                let a = &r.atoms()[ai];
                (0..tgd.head.len())
                    .filter(|&hi| tgd.head[hi].predicate == a.predicate && tgd.head[hi].arity() == a.arity())
                    .collect()
            })
            .collect();
        let mut choice = vec![0usize; subset.len()];
        'product: loop {
            let targets: Vec<usize> = choice.iter().zip(&options).map(|(&c, o)| o[c]).collect();
            if let Some(res) = piece_step(r, &tgd, &existentials, &subset, &targets) {
                out.push(res);
            }
            for k in 0..choice.len() {
                choice[k] += 1;
                if choice[k] < options[k].len() {
                    continue 'product;
                }
                choice[k] = 0;
            }
            break;
        }
    }
    out
}

fn normalize(q: &Cq) -> Cq {
    canonical_key(&core(q))
}

/// Saturates the rewriting of `q` under an NR or sticky set of tgds.
pub fn ucq_rewrite(q: &Ucq, deps: &DependencySet, bound: Option<usize>) -> Result<RewriteSet, ContainmentError> {
    let labels = deps.labels();
    if !deps.egds.is_empty() || !(labels.non_recursive || labels.sticky) {
        return Err(ContainmentError::Unsupported);
    }
    let mut set: Vec<Cq> = Vec::new();
    let mut queue: VecDeque<Cq> = VecDeque::new();
    let mut saturated = true;

    let offer = |d: Cq, set: &mut Vec<Cq>, queue: &mut VecDeque<Cq>| {
        if set.iter().any(|e| cq_homomorphism(e, &d).is_some()) {
            return;
        }
        set.retain(|e| cq_homomorphism(&d, e).is_none());
        set.push(d.clone());
        queue.push_back(d);
    };
    for d in &q.disjuncts {
        let n = normalize(d);
        if bound.is_some_and(|b| n.len() > b) {
            saturated = false;
            continue;
        }
        offer(n, &mut set, &mut queue);
    }
    while let Some(r) = queue.pop_front() {
        if !set.contains(&r) {
            continue;
        }
        for tgd in &deps.tgds {
            for next in rewrite_step(&r, tgd) {
                let n = normalize(&next);
                if bound.is_some_and(|b| n.len() > b) {
                    saturated = false;
                    continue;
                }
                offer(n, &mut set, &mut queue);
            }
        }
    }
    set.sort_by(|a, b| (a.len(), a.atoms()).cmp(&(b.len(), b.atoms())));
    let height = set.iter().map(Cq::len).max().unwrap_or(0);
    Ok(RewriteSet {
        disjuncts: set,
        height,
        saturated,
    })
}

/// `f(q,Σ) = p·(a·|q|+1)^a` with `p` and `a` the number of predicates and
/// the largest arity over `q` and `Σ`. Saturates at `u128::MAX`.
pub fn rewrite_height_bound(q: &Cq, deps: &DependencySet) -> u128 {
    let mut preds = deps.predicates();
    preds.extend(q.predicates());
    let p = preds.len() as u128;
    let a = preds.values().copied().max().unwrap_or(0) as u32;
    let base = (a as u128).saturating_mul(q.len() as u128).saturating_add(1);
    p.saturating_mul(base.saturating_pow(a))
}
