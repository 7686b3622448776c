#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use semacyc::chase::{chase, chase_query, ChasePolicy, ChaseStatus};
use semacyc::model::name;
use semacyc::parser::fd_egd;
use semacyc::{Atom, Cq, DependencySet, Egd, Instance, Term, Tgd};

pub type Sig = [(&'static str, usize)];

fn var(i: usize) -> Term {
    Term::var(&format!("V{i}"))
}

fn dedup(terms: &[Term]) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::new();
    for t in terms {
        if !out.contains(t) {
            out.push(t.clone());
        }
    }
    out
}

fn pick_free(rng: &mut StdRng, atoms: &[Atom], max_free: usize) -> Vec<semacyc::Name> {
    let mut vars: Vec<semacyc::Name> = atoms
        .iter()
        .flat_map(|a| a.variables().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    vars.shuffle(rng);
    let k = rng.gen_range(0..=max_free.min(vars.len()));
    vars.truncate(k);
    vars
}

/// Tree-shaped query: each atom shares variables only with one earlier
/// atom, so the parent links form a join tree.
pub fn acyclic_cq(rng: &mut StdRng, sig: &Sig, max_atoms: usize, max_free: usize) -> Cq {
    let n = rng.gen_range(1..=max_atoms);
    let mut atoms: Vec<Atom> = Vec::new();
    let mut fresh = 0;
    for i in 0..n {
        let &(p, a) = sig.choose(rng).unwrap();
        let shared = if i == 0 {
            Vec::new()
        } else {
            dedup(&atoms[rng.gen_range(0..i)].args)
        };
        let args = (0..a)
            .map(|_| {
                if !shared.is_empty() && rng.gen_bool(0.5) {
                    shared.choose(rng).unwrap().clone()
                } else {
                    fresh += 1;
                    var(fresh)
                }
            })
            .collect();
        atoms.push(Atom::new(p, args));
    }
    let free = pick_free(rng, &atoms, max_free);
    Cq::from_parts(name("q"), free, atoms)
}

/// Arbitrary query over a pool of `vars` variables.
pub fn any_cq(rng: &mut StdRng, sig: &Sig, max_atoms: usize, vars: usize, max_free: usize) -> Cq {
    let n = rng.gen_range(1..=max_atoms);
    let atoms: Vec<Atom> = (0..n)
        .map(|_| {
            let &(p, a) = sig.choose(rng).unwrap();
            Atom::new(p, (0..a).map(|_| var(rng.gen_range(0..vars))).collect())
        })
        .collect();
    let free = pick_free(rng, &atoms, max_free);
    Cq::from_parts(name("q"), free, atoms)
}

/// Boolean query with every atom sharing a variable with an earlier one.
pub fn connected_boolean_cq(rng: &mut StdRng, sig: &Sig, max_atoms: usize, vars: usize) -> Cq {
    loop {
        let mut q = any_cq(rng, sig, max_atoms, vars, 0);
        q.free.clear();
        if semacyc::model::is_connected(&q) {
            return q;
        }
    }
}

/// Guarded tgds: a guard holding every body variable, an optional side
/// atom over guard variables, and one head atom.
pub fn guarded_tgds(rng: &mut StdRng, sig: &Sig, max_tgds: usize) -> DependencySet {
    let n = rng.gen_range(1..=max_tgds);
    let tgds = (0..n)
        .map(|_| {
            let &(gp, ga) = sig.choose(rng).unwrap();
            let guard: Vec<Term> = (0..ga)
                .map(|i| if rng.gen_bool(0.8) { var(i) } else { var(rng.gen_range(0..3)) })
                .collect();
            let gv = dedup(&guard);
            let mut body = vec![Atom::new(gp, guard)];
            if rng.gen_bool(0.3) {
                let &(sp, sa) = sig.choose(rng).unwrap();
                body.push(Atom::new(sp, (0..sa).map(|_| gv.choose(rng).unwrap().clone()).collect()));
            }
            let &(hp, ha) = sig.choose(rng).unwrap();
            let head = (0..ha)
                .map(|i| {
                    if rng.gen_bool(0.6) {
                        gv.choose(rng).unwrap().clone()
                    } else {
                        Term::var(&format!("Z{}", i % 2))
                    }
                })
                .collect();
            Tgd::new(body, vec![Atom::new(hp, head)]).unwrap()
        })
        .collect();
    DependencySet::from_tgds(tgds)
}

/// Non-recursive tgds: bodies use strictly lower-ranked predicates than
/// heads, following the order of `sig`.
pub fn nr_tgds(rng: &mut StdRng, sig: &Sig, max_tgds: usize, existentials: bool) -> DependencySet {
    let n = rng.gen_range(1..=max_tgds);
    let tgds = (0..n)
        .map(|_| {
            let cut = rng.gen_range(1..sig.len());
            let body_atoms = rng.gen_range(1..=2);
            let body: Vec<Atom> = (0..body_atoms)
                .map(|_| {
                    let &(p, a) = sig[..cut].choose(rng).unwrap();
                    Atom::new(p, (0..a).map(|_| var(rng.gen_range(0..3))).collect())
                })
                .collect();
            let bv: Vec<Term> = dedup(&body.iter().flat_map(|a| a.args.clone()).collect::<Vec<_>>());
            let head_atoms = rng.gen_range(1..=2);
            let head = (0..head_atoms)
                .map(|_| {
                    let &(p, a) = sig[cut..].choose(rng).unwrap();
                    let args = (0..a)
                        .map(|_| {
                            if existentials && rng.gen_bool(0.3) {
                                Term::var("Z")
                            } else {
                                bv.choose(rng).unwrap().clone()
                            }
                        })
                        .collect();
                    Atom::new(p, args)
                })
                .collect();
            Tgd::new(body, head).unwrap()
        })
        .collect();
    DependencySet::from_tgds(tgds)
}

/// Random keys on the binary predicates of `sig`.
pub fn binary_keys(rng: &mut StdRng, sig: &Sig) -> DependencySet {
    let mut egds: Vec<Egd> = Vec::new();
    for &(p, a) in sig {
        if a != 2 {
            continue;
        }
        for (lhs, rhs) in [(1, 2), (2, 1)] {
            if rng.gen_bool(0.5) {
                egds.push(fd_egd(p, 2, &BTreeSet::from([lhs]), rhs));
            }
        }
    }
    DependencySet::from_egds(egds)
}

pub fn random_db(rng: &mut StdRng, sig: &Sig, max_facts: usize, consts: usize) -> Instance {
    let n = rng.gen_range(1..=max_facts);
    (0..n)
        .map(|_| {
            let &(p, a) = sig.choose(rng).unwrap();
            Atom::new(p, (0..a).map(|_| Term::constant(&format!("c{}", rng.gen_range(0..consts)))).collect())
        })
        .collect()
}

/// Random database over arity-≤2 predicates that satisfies `keys`:
/// facts clashing with an earlier fact on a key are skipped.
pub fn keyed_db(rng: &mut StdRng, sig: &Sig, keys: &DependencySet, max_facts: usize, consts: usize) -> Instance {
    let mut db = Instance::new();
    for f in random_db(rng, sig, max_facts, consts).atoms() {
        let mut trial = db.clone();
        trial.insert(f);
        if semacyc::chase::satisfies(&trial, keys).is_empty() {
            db = trial;
        }
    }
    db
}

/// Repairs `db` by chasing it; `None` when the chase does not saturate
/// within `depth` levels.
pub fn repair(db: &Instance, deps: &DependencySet, depth: usize) -> Option<Instance> {
    let res = chase(db, deps, &ChasePolicy::depth(depth)).ok()?;
    (res.status == ChaseStatus::Saturated).then_some(res.instance)
}

/// Turns frozen terms and nulls of a chased canonical database back into
/// variables.
pub fn unfreeze(t: &Term) -> Term {
    match t {
        Term::Frozen(v) => Term::Var(v.clone()),
        Term::Null(n) => Term::var(&format!("N{n}")),
        other => other.clone(),
    }
}

/// A query equivalent to `q` under `deps`: `q` together with a random
/// subset of the atoms its chase derives.
pub fn padded_with_chase(rng: &mut StdRng, q: &Cq, deps: &DependencySet, depth: usize) -> Option<Cq> {
    let (res, tuple) = chase_query(q, deps, &ChasePolicy::depth(depth)).ok()?;
    if res.status == ChaseStatus::Failed {
        return None;
    }
    let keep_all = !deps.egds.is_empty();
    let atoms: Vec<Atom> = res
        .instance
        .iter()
        .filter(|_| keep_all || rng.gen_bool(0.5))
        .map(|a| a.map_terms(unfreeze))
        .collect();
    let base: Vec<Atom> = if keep_all { Vec::new() } else { q.atoms().to_vec() };
    let free = tuple
        .iter()
        .map(|t| unfreeze(t).as_var().cloned().expect("answer terms stay variables"))
        .collect();
    Some(Cq::from_parts(q.name.clone(), free, base.into_iter().chain(atoms)))
}

/// Decodes a Prüfer sequence into the edge list of a labelled tree.
fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::new();
    for &s in seq {
        let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
        edges.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Checks every labelled tree on the atoms for the connectedness
/// condition. Exponential; meant for a handful of atoms.
pub fn brute_force_acyclic(atoms: &[Atom]) -> bool {
    let n = atoms.len();
    if n <= 2 {
        return true;
    }
    let terms: BTreeSet<&Term> = atoms.iter().flat_map(|a| a.args.iter()).filter(|t| !t.is_rigid()).collect();
    let mut seq = vec![0; n - 2];
    loop {
        let edges = prufer_edges(&seq, n);
        let ok = terms.iter().all(|t| {
            let holds: Vec<bool> = atoms.iter().map(|a| a.args.contains(t)).collect();
            let nodes = holds.iter().filter(|h| **h).count();
            // A vertex set of a tree is connected iff it spans nodes-1 edges.
            let inner = edges.iter().filter(|(a, b)| holds[*a] && holds[*b]).count();
            inner + 1 == nodes
        });
        if ok {
            return true;
        }
        let mut k = 0;
        while k < seq.len() {
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
        if k == seq.len() {
            return false;
        }
    }
}

/// The smallest endomorphic image of `q` fixing its answer variables,
/// found by trying every variable map.
pub fn brute_force_core(q: &Cq) -> Cq {
    let vars: Vec<semacyc::Name> = q.variables().into_iter().collect();
    let free: BTreeSet<&semacyc::Name> = q.free.iter().collect();
    let atoms: BTreeSet<&Atom> = q.atoms().iter().collect();
    let mut best = q.clone();
    let mut img = vec![0usize; vars.len()];
    loop {
        let fixed = vars.iter().enumerate().all(|(i, v)| !free.contains(v) || vars[img[i]] == *v);
        if fixed {
            let m: BTreeMap<&semacyc::Name, &semacyc::Name> = vars.iter().zip(img.iter().map(|&j| &vars[j])).collect();
            let image = q.substitute(|t| match t {
                Term::Var(v) => Term::Var(m[v].clone()),
                other => other.clone(),
            });
            if image.atoms().iter().all(|a| atoms.contains(a)) && image.len() < best.len() {
                best = image;
            }
        }
        let mut k = 0;
        while k < img.len() {
            img[k] += 1;
            if img[k] < vars.len() {
                break;
            }
            img[k] = 0;
            k += 1;
        }
        if k == img.len() {
            return best;
        }
    }
}
