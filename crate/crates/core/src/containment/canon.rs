//! Exact canonical labelling of conjunctive queries.
//!
//! Two queries are isomorphic (a bijective variable renaming that maps the
//! atom set onto the atom set and the free tuple onto the free tuple) iff
//! their canonical forms are equal.

use std::collections::HashMap;

use crate::model::{name, Atom, Cq, Name, Term};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Code {
    Rigid(Term),
    Old(usize),
    New(usize),
}

type Enc = (Name, Vec<Code>);

struct Labeller<'a> {
    atoms: &'a [Atom],
    used: Vec<bool>,
    map: HashMap<Name, usize>,
    seq: Vec<Enc>,
    best: Option<Vec<Enc>>,
}

impl Labeller<'_> {
    fn encode(&self, a: &Atom) -> Enc {
        let mut fresh: Vec<&Name> = Vec::new();
        let codes = a
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => match self.map.get(v) {
                    Some(&i) => Code::Old(i),
                    None => match fresh.iter().position(|f| *f == v) {
                        Some(i) => Code::New(i),
                        None => {
                            fresh.push(v);
                            Code::New(fresh.len() - 1)
                        }
                    },
                },
                other => Code::Rigid(other.clone()),
            })
            .collect();
        (a.predicate.clone(), codes)
    }

    fn dfs(&mut self, tight: bool) {
        let depth = self.seq.len();
        if depth == self.atoms.len() {
            if self.best.as_ref().is_none_or(|b| self.seq < *b) {
                self.best = Some(self.seq.clone());
            }
            return;
        }
        let mut min: Option<Enc> = None;
        let mut ties = Vec::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if self.used[i] {
                continue;
            }
            let e = self.encode(a);
            match &min {
                Some(m) if e > *m => {}
                Some(m) if e == *m => ties.push(i),
                _ => {
                    min = Some(e);
                    ties = vec![i];
                }
            }
        }
        let min = min.expect("atoms remain");
        let mut still_tight = tight;
        if tight {
            if let Some(best) = &self.best {
                match min.cmp(&best[depth]) {
                    std::cmp::Ordering::Greater => return,
                    std::cmp::Ordering::Less => still_tight = false,
                    std::cmp::Ordering::Equal => {}
                }
            }
        }
        for i in ties {
            let atom = &self.atoms[i];
            let mut added = Vec::new();
            for t in &atom.args {
                if let Term::Var(v) = t {
                    if !self.map.contains_key(v) {
                        self.map.insert(v.clone(), self.map.len());
                        added.push(v.clone());
                    }
                }
            }
            self.used[i] = true;
            self.seq.push(min.clone());
            self.dfs(still_tight);
            self.seq.pop();
            self.used[i] = false;
            for v in added {
                self.map.remove(&v);
            }
            // The best now starts with this prefix, so later siblings
            // compare against it.
            still_tight = true;
        }
    }
}

/// Canonical representative of `q`'s isomorphism class, with variables
/// renamed to `V0, V1, …` (free variables first, in tuple order).
pub fn canonical(q: &Cq) -> Cq {
    let mut map = HashMap::new();
    for v in &q.free {
        let n = map.len();
        map.entry(v.clone()).or_insert(n);
    }
    let mut l = Labeller {
        atoms: q.atoms(),
        used: vec![false; q.len()],
        map,
        seq: Vec::new(),
        best: None,
    };
    l.dfs(true);
    let best = l.best.unwrap_or_default();

    let nfree = {
        let mut seen = Vec::new();
        for v in &q.free {
            if !seen.contains(v) {
                seen.push(v.clone());
            }
        }
        seen.len()
    };
    let var = |i: usize| Term::Var(name(&format!("V{i}")));
    let mut next = nfree;
    let mut atoms = Vec::with_capacity(best.len());
    for (pred, codes) in &best {
        let base = next;
        let mut max_new = 0;
        let args = codes
            .iter()
            .map(|c| match c {
                Code::Rigid(t) => t.clone(),
                Code::Old(i) => var(*i),
                Code::New(k) => {
                    max_new = max_new.max(k + 1);
                    var(base + k)
                }
            })
            .collect();
        next += max_new;
        atoms.push(Atom {
            predicate: pred.clone(),
            args,
        });
    }
    let mut free_ids: Vec<Name> = Vec::new();
    let free = q
        .free
        .iter()
        .map(|v| {
            let i = match free_ids.iter().position(|w| w == v) {
                Some(i) => i,
                None => {
                    free_ids.push(v.clone());
                    free_ids.len() - 1
                }
            };
            name(&format!("V{i}"))
        })
        .collect();
    Cq::from_parts(q.name.clone(), free, atoms)
}

/// Canonical form with the query name erased, suitable as a set key.
pub fn canonical_key(q: &Cq) -> Cq {
    let mut c = canonical(q);
    c.name = name("q");
    c
}

pub fn isomorphic(a: &Cq, b: &Cq) -> bool {
    a.len() == b.len() && a.free.len() == b.free.len() && canonical_key(a) == canonical_key(b)
}
