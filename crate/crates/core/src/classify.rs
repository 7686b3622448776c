//! Syntactic classes of dependency sets and the sticky marking.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::{is_body_connected, DependencySet, Name, Term, Tgd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Empty,
    Tgds,
    Egds,
    Mixed,
}

/// Class flags. Tgd flags are computed on the tgd fragment and egd flags
/// on the egd fragment; a flag over an empty fragment is vacuously true.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassLabels {
    pub kind: SetKind,
    pub guarded: bool,
    pub linear: bool,
    pub inclusion_dependency: bool,
    pub full: bool,
    pub non_recursive: bool,
    pub sticky: bool,
    pub body_connected: bool,
    /// No existential variable occurs in two head atoms of the same tgd.
    pub single_head_existentials: bool,
    pub fd: bool,
    pub key: bool,
    pub unary_fd: bool,
    pub k2_key: bool,
    pub arity_le_2: bool,
    pub terminating_chase: bool,
}

impl ClassLabels {
    /// `(name, value)` pairs in display order.
    pub fn flags(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("guarded", self.guarded),
            ("linear", self.linear),
            ("inclusion_dependency", self.inclusion_dependency),
            ("full", self.full),
            ("non_recursive", self.non_recursive),
            ("sticky", self.sticky),
            ("body_connected", self.body_connected),
            ("single_head_existentials", self.single_head_existentials),
            ("fd", self.fd),
            ("key", self.key),
            ("unary_fd", self.unary_fd),
            ("k2_key", self.k2_key),
            ("arity_le_2", self.arity_le_2),
            ("terminating_chase", self.terminating_chase),
        ]
    }
}

/// Least fixpoint of the marking rules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Marking {
    /// `(tgd index, variable)` pairs; each marked variable is marked in
    /// all of its body occurrences.
    pub marked: BTreeSet<(usize, String)>,
    /// Body positions `(tgd, atom, argument)` holding marked variables.
    pub positions: BTreeSet<(usize, usize, usize)>,
    pub rounds: usize,
}

impl Marking {
    pub fn is_marked(&self, tgd: usize, var: &str) -> bool {
        self.marked.contains(&(tgd, var.to_string()))
    }
}

pub fn sticky_marking(tgds: &[Tgd]) -> Marking {
    let mut marked: BTreeSet<(usize, Name)> = BTreeSet::new();
    for (i, t) in tgds.iter().enumerate() {
        for v in t.body_variables() {
            let var = Term::Var(v.clone());
            if t.head.iter().any(|h| !h.args.contains(&var)) {
                marked.insert((i, v));
            }
        }
    }
    let mut rounds = 1;
    loop {
        // Predicate positions where a marked variable occurs in some body.
        let mut hot: BTreeSet<(Name, usize)> = BTreeSet::new();
        for (i, v) in &marked {
            for a in &tgds[*i].body {
                for (p, t) in a.args.iter().enumerate() {
                    if t.as_var() == Some(v) {
                        hot.insert((a.predicate.clone(), p));
                    }
                }
            }
        }
        let mut grew = false;
        for (i, t) in tgds.iter().enumerate() {
            for v in t.body_variables() {
                if marked.contains(&(i, v.clone())) {
                    continue;
                }
                let hit = t.head.iter().any(|h| {
                    h.args
                        .iter()
                        .enumerate()
                        .any(|(p, x)| x.as_var() == Some(&v) && hot.contains(&(h.predicate.clone(), p)))
                });
                if hit {
                    marked.insert((i, v));
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
        rounds += 1;
    }
    let mut positions = BTreeSet::new();
    for (i, v) in &marked {
        for (ai, a) in tgds[*i].body.iter().enumerate() {
            for (p, t) in a.args.iter().enumerate() {
                if t.as_var() == Some(v) {
                    positions.insert((*i, ai, p));
                }
            }
        }
    }
    Marking {
        marked: marked.into_iter().map(|(i, v)| (i, v.to_string())).collect(),
        positions,
        rounds,
    }
}

fn is_sticky(tgds: &[Tgd], m: &Marking) -> bool {
    tgds.iter().enumerate().all(|(i, t)| {
        let mut count: BTreeMap<&Name, usize> = BTreeMap::new();
        for a in &t.body {
            for v in a.variables() {
                *count.entry(v).or_default() += 1;
            }
        }
        count.iter().all(|(v, &n)| n < 2 || !m.is_marked(i, v))
    })
}

/// Predicate graph: `P → R` when `P` occurs in a body and `R` in the head
/// of the same tgd.
pub fn predicate_graph(tgds: &[Tgd]) -> BTreeMap<Name, BTreeSet<Name>> {
    let mut g: BTreeMap<Name, BTreeSet<Name>> = BTreeMap::new();
    for t in tgds {
        for b in &t.body {
            for h in &t.head {
                g.entry(b.predicate.clone()).or_default().insert(h.predicate.clone());
            }
        }
    }
    g
}

/// Number of nodes on a longest path in an acyclic predicate graph; `None`
/// if the graph has a cycle.
pub fn longest_predicate_path(tgds: &[Tgd]) -> Option<usize> {
    let g = predicate_graph(tgds);
    let mut nodes: BTreeSet<Name> = g.keys().cloned().collect();
    for vs in g.values() {
        nodes.extend(vs.iter().cloned());
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<Name, u8> = BTreeMap::new();
    let mut best: BTreeMap<Name, usize> = BTreeMap::new();
    fn visit(
        n: &Name,
        g: &BTreeMap<Name, BTreeSet<Name>>,
        state: &mut BTreeMap<Name, u8>,
        best: &mut BTreeMap<Name, usize>,
    ) -> Option<usize> {
        match state.get(n) {
            Some(1) => return None,
            Some(2) => return Some(best[n]),
            _ => {}
        }
        state.insert(n.clone(), 1);
        let mut len = 1;
        if let Some(succ) = g.get(n) {
            for s in succ {
                len = len.max(1 + visit(s, g, state, best)?);
            }
        }
        state.insert(n.clone(), 2);
        best.insert(n.clone(), len);
        Some(len)
    }
    let mut longest = 0;
    for n in &nodes {
        longest = longest.max(visit(n, &g, &mut state, &mut best)?);
    }
    Some(longest)
}

pub fn classify(deps: &DependencySet) -> ClassLabels {
    let tgds = &deps.tgds;
    let egds = &deps.egds;
    let kind = match (tgds.is_empty(), egds.is_empty()) {
        (true, true) => SetKind::Empty,
        (false, true) => SetKind::Tgds,
        (true, false) => SetKind::Egds,
        (false, false) => SetKind::Mixed,
    };

    let guarded = tgds.iter().all(|t| t.guard().is_some());
    let linear = tgds.iter().all(|t| t.body.len() == 1);
    let no_repeats = |atoms: &[crate::model::Atom]| {
        atoms.iter().all(|a| {
            let vars: BTreeSet<&Term> = a.args.iter().collect();
            vars.len() == a.arity() && a.args.iter().all(Term::is_var)
        })
    };
    let inclusion_dependency = linear
        && tgds
            .iter()
            .all(|t| t.head.len() == 1 && no_repeats(&t.body) && no_repeats(&t.head));
    let full = tgds.iter().all(|t| t.existentials().is_empty());
    let non_recursive = longest_predicate_path(tgds).is_some();
    let marking = sticky_marking(tgds);
    let sticky = is_sticky(tgds, &marking);
    let body_connected = tgds.iter().all(is_body_connected) && egds.iter().all(is_body_connected);
    let single_head_existentials = tgds.iter().all(|t| {
        t.existentials().iter().all(|z| {
            let var = Term::Var(z.clone());
            t.head.iter().filter(|h| h.args.contains(&var)).count() <= 1
        })
    });

    let fds: Vec<_> = egds.iter().map(|e| e.as_fd()).collect();
    let fd = fds.iter().all(Option::is_some);
    let fds: Vec<_> = fds.into_iter().flatten().collect();
    let key = fd && {
        let mut groups: BTreeMap<(Name, Vec<usize>), BTreeSet<usize>> = BTreeMap::new();
        for f in &fds {
            groups
                .entry((f.predicate.clone(), f.lhs.clone()))
                .or_default()
                .insert(f.rhs);
        }
        groups.iter().all(|((pred, lhs), rhs)| {
            let arity = fds.iter().find(|f| &f.predicate == pred).map_or(0, |f| f.arity);
            (1..=arity).all(|i| lhs.contains(&i) || rhs.contains(&i))
        })
    };
    let unary_fd = fd && fds.iter().all(|f| f.lhs.len() == 1);
    let arity_le_2 = deps.predicates().values().all(|&a| a <= 2);
    let k2_key = key && arity_le_2;
    let terminating_chase = tgds.is_empty() || non_recursive || full;

    ClassLabels {
        kind,
        guarded,
        linear,
        inclusion_dependency,
        full,
        non_recursive,
        sticky,
        body_connected,
        single_head_existentials,
        fd,
        key,
        unary_fd,
        k2_key,
        arity_le_2,
        terminating_chase,
    }
}
