//! Backtracking homomorphism search with per-position indexes.

use std::collections::{BTreeMap, HashMap};

use crate::model::{Atom, Cq, Instance, Name, Term};

/// A mapping on terms. Rigid constants are never keys; they map to
/// themselves implicitly.
pub type Mapping = BTreeMap<Term, Term>;

/// Target atoms indexed by predicate and by (predicate, position, term).
#[derive(Clone, Debug, Default)]
pub struct AtomIndex {
    atoms: Vec<Atom>,
    by_pred: HashMap<(Name, usize), Vec<u32>>,
    by_pos: HashMap<(Name, usize, Term), Vec<u32>>,
}

impl AtomIndex {
    pub fn new<'a>(atoms: impl IntoIterator<Item = &'a Atom>) -> AtomIndex {
        let mut idx = AtomIndex::default();
        for a in atoms {
            idx.push(a.clone());
        }
        idx
    }

    pub fn from_instance(inst: &Instance) -> AtomIndex {
        AtomIndex::new(inst.iter())
    }

    /// Appends an atom; callers keep atoms distinct.
    pub fn push(&mut self, atom: Atom) {
        let id = self.atoms.len() as u32;
        self.by_pred
            .entry((atom.predicate.clone(), atom.arity()))
            .or_default()
            .push(id);
        for (i, t) in atom.args.iter().enumerate() {
            self.by_pos
                .entry((atom.predicate.clone(), i, t.clone()))
                .or_default()
                .push(id);
        }
        self.atoms.push(atom);
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    fn candidates(&self, pattern: &Atom, bound: &[Option<Term>]) -> &[u32] {
        let mut best: &[u32] = match self.by_pred.get(&(pattern.predicate.clone(), pattern.arity())) {
            Some(v) => v,
            None => return &[],
        };
        for (i, b) in bound.iter().enumerate() {
            if let Some(t) = b {
                match self.by_pos.get(&(pattern.predicate.clone(), i, t.clone())) {
                    Some(v) if v.len() < best.len() => best = v,
                    Some(_) => {}
                    None => return &[],
                }
            }
        }
        best
    }
}

/// Source atoms compiled to slot form: every mappable term gets a slot.
struct Compiled<'a> {
    atoms: &'a [Atom],
    slots: Vec<Vec<Slot>>,
    terms: Vec<Term>,
}

#[derive(Clone)]
enum Slot {
    Fixed(Term),
    Var(usize),
}

fn compile(atoms: &[Atom]) -> Compiled<'_> {
    let mut ids: HashMap<&Term, usize> = HashMap::new();
    let mut terms = Vec::new();
    let slots = atoms
        .iter()
        .map(|a| {
            a.args
                .iter()
                .map(|t| {
                    if t.is_rigid() {
                        Slot::Fixed(t.clone())
                    } else {
                        let id = *ids.entry(t).or_insert_with(|| {
                            terms.push(t.clone());
                            terms.len() - 1
                        });
                        Slot::Var(id)
                    }
                })
                .collect()
        })
        .collect();
    Compiled { atoms, slots, terms }
}

struct Search<'a, F> {
    src: Compiled<'a>,
    dst: &'a AtomIndex,
    assign: Vec<Option<Term>>,
    done: Vec<bool>,
    on_solution: F,
    stop: bool,
}

impl<'a, F: FnMut(&[Option<Term>]) -> bool> Search<'a, F> {
    fn bound_args(&self, i: usize) -> Vec<Option<Term>> {
        self.src.slots[i]
            .iter()
            .map(|s| match s {
                Slot::Fixed(t) => Some(t.clone()),
                Slot::Var(v) => self.assign[*v].clone(),
            })
            .collect()
    }

    fn run(&mut self, remaining: usize) {
        if self.stop {
            return;
        }
        if remaining == 0 {
            if !(self.on_solution)(&self.assign) {
                self.stop = true;
            }
            return;
        }
        // Most-constrained atom first.
        let mut pick: Option<(usize, Vec<u32>)> = None;
        for i in 0..self.src.atoms.len() {
            if self.done[i] {
                continue;
            }
            let bound = self.bound_args(i);
            let cands = self.dst.candidates(&self.src.atoms[i], &bound);
            if pick.as_ref().is_none_or(|(_, c)| cands.len() < c.len()) {
                let empty = cands.is_empty();
                pick = Some((i, cands.to_vec()));
                if empty {
                    return;
                }
            }
        }
        let (i, cands) = pick.expect("remaining > 0");
        self.done[i] = true;
        for c in cands {
            let target = &self.dst.atoms[c as usize];
            let mut newly = Vec::new();
            let mut ok = true;
            for (slot, t) in self.src.slots[i].iter().zip(&target.args) {
                match slot {
                    Slot::Fixed(f) => {
                        if f != t {
                            ok = false;
                            break;
                        }
                    }
                    Slot::Var(v) => match &self.assign[*v] {
                        Some(cur) if cur != t => {
                            ok = false;
                            break;
                        }
                        Some(_) => {}
                        None => {
                            self.assign[*v] = Some(t.clone());
                            newly.push(*v);
                        }
                    },
                }
            }
            if ok {
                self.run(remaining - 1);
            }
            for v in newly {
                self.assign[v] = None;
            }
            if self.stop {
                break;
            }
        }
        self.done[i] = false;
    }
}

/// Calls `f` on every homomorphism from `src` into `dst` extending `fix`
/// until `f` returns `false`. Returns `false` when `fix` is inconsistent
/// with `src` (a pinned term that cannot be honored).
pub fn for_each_homomorphism(
    src: &[Atom],
    dst: &AtomIndex,
    fix: &Mapping,
    mut f: impl FnMut(&Mapping) -> bool,
) {
    let compiled = compile(src);
    let mut assign = vec![None; compiled.terms.len()];
    let mut extra = Mapping::new();
    for (k, v) in fix {
        if k.is_rigid() {
            if k != v {
                return;
            }
            continue;
        }
        match compiled.terms.iter().position(|t| t == k) {
            Some(i) => assign[i] = Some(v.clone()),
            None => {
                extra.insert(k.clone(), v.clone());
            }
        }
    }
    let terms = compiled.terms.clone();
    let n = src.len();
    let mut search = Search {
        src: compiled,
        dst,
        assign,
        done: vec![false; n],
        on_solution: |assign: &[Option<Term>]| {
            let mut m = extra.clone();
            for (t, a) in terms.iter().zip(assign) {
                m.insert(t.clone(), a.clone().expect("complete assignment"));
            }
            f(&m)
        },
        stop: false,
    };
    search.run(n);
}

pub fn find_homomorphism(src: &[Atom], dst: &AtomIndex, fix: &Mapping) -> Option<Mapping> {
    let mut found = None;
    for_each_homomorphism(src, dst, fix, |m| {
        found = Some(m.clone());
        false
    });
    found
}

pub fn all_homomorphisms(src: &[Atom], dst: &AtomIndex, fix: &Mapping) -> Vec<Mapping> {
    let mut out = Vec::new();
    for_each_homomorphism(src, dst, fix, |m| {
        out.push(m.clone());
        true
    });
    out
}

/// Builds the pin `from[i] ↦ to[i]`; `None` if it is not a function.
pub fn pin(from: &[Term], to: &[Term]) -> Option<Mapping> {
    let mut m = Mapping::new();
    for (a, b) in from.iter().zip(to) {
        if a.is_rigid() {
            if a != b {
                return None;
            }
            continue;
        }
        match m.get(a) {
            Some(prev) if prev != b => return None,
            Some(_) => {}
            None => {
                m.insert(a.clone(), b.clone());
            }
        }
    }
    Some(m)
}

/// A homomorphism from `from` to `to` (as CQs) sending the free tuple of
/// `from` position-wise onto the free tuple of `to`; witnesses
/// `to ⊆ from`.
pub fn cq_homomorphism(from: &Cq, to: &Cq) -> Option<Mapping> {
    if from.free.len() != to.free.len() {
        return None;
    }
    let fix = pin(&from.free_terms(), &to.free_terms())?;
    find_homomorphism(from.atoms(), &AtomIndex::new(to.atoms()), &fix)
}

pub fn apply(m: &Mapping, t: &Term) -> Term {
    m.get(t).cloned().unwrap_or_else(|| t.clone())
}

pub fn apply_atom(m: &Mapping, a: &Atom) -> Atom {
    a.map_terms(|t| apply(m, t))
}
