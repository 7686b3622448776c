//! α-acyclicity: GYO ear removal, join trees and witness compaction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::containment::hom::Mapping;
use crate::model::{name, Atom, Cq, Instance, Name, Term};

/// A join forest. Nodes whose `parent` is `None` hang off a virtual root
/// that carries no terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JoinTree {
    pub nodes: Vec<Atom>,
    pub parent: Vec<Option<usize>>,
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: usize,
    atom: &'a Atom,
    parent: Option<usize>,
}

impl JoinTree {
    pub fn roots(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.parent[i].is_none()).collect()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.nodes.len()];
        for (i, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                ch[*p].push(i);
            }
        }
        ch
    }

    /// Nodes ordered so that every parent precedes its children.
    pub fn preorder(&self) -> Vec<usize> {
        let ch = self.children();
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<usize> = self.roots().into_iter().rev().collect();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(ch[n].iter().rev());
        }
        out
    }

    /// Indented outline, one node per line.
    pub fn outline(&self) -> String {
        let ch = self.children();
        let mut out = String::new();
        fn walk(t: &JoinTree, ch: &[Vec<usize>], n: usize, depth: usize, out: &mut String) {
            let _ = writeln!(out, "{}{}", "  ".repeat(depth), t.nodes[n]);
            for &c in &ch[n] {
                walk(t, ch, c, depth + 1, out);
            }
        }
        for r in self.roots() {
            walk(self, &ch, r, 0, &mut out);
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<JsonNode> = (0..self.nodes.len())
            .map(|id| JsonNode {
                id,
                atom: &self.nodes[id],
                parent: self.parent[id],
            })
            .collect();
        serde_json::to_value(nodes).expect("join tree serializes")
    }
}

fn labeled(a: &Atom) -> BTreeSet<&Term> {
    a.labeled_terms()
}

/// GYO reduction over a set of atoms; `None` when cyclic.
pub fn gyo(atoms: &[Atom]) -> Option<JoinTree> {
    let nodes: Vec<Atom> = atoms
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = nodes.len();
    let terms: Vec<BTreeSet<&Term>> = nodes.iter().map(labeled).collect();
    let mut occurrences: HashMap<&Term, usize> = HashMap::new();
    for ts in &terms {
        for t in ts {
            *occurrences.entry(t).or_default() += 1;
        }
    }
    let mut alive = vec![true; n];
    let mut parent = vec![None; n];
    for _ in 0..n {
        let mut removed = false;
        for e in 0..n {
            if !alive[e] {
                continue;
            }
            let shared: Vec<&Term> = terms[e]
                .iter()
                .copied()
                .filter(|t| occurrences[t] > 1)
                .collect();
            let witness = if shared.is_empty() {
                None
            } else {
                match (0..n).find(|&f| f != e && alive[f] && shared.iter().all(|t| terms[f].contains(t))) {
                    Some(f) => Some(f),
                    None => continue,
                }
            };
            parent[e] = witness;
            alive[e] = false;
            for t in &terms[e] {
                *occurrences.get_mut(t).expect("counted") -= 1;
            }
            removed = true;
            break;
        }
        if !removed {
            return None;
        }
    }
    Some(JoinTree { nodes, parent })
}

pub fn is_acyclic_cq(q: &Cq) -> Option<JoinTree> {
    gyo(q.atoms())
}

pub fn is_acyclic_instance(i: &Instance) -> Option<JoinTree> {
    gyo(&i.atoms())
}

/// Checks both join-tree conditions for `t` over the atom set `atoms`.
pub fn validate_join_tree(atoms: &[Atom], t: &JoinTree) -> bool {
    let n = t.nodes.len();
    if t.parent.len() != n {
        return false;
    }
    let set: BTreeSet<&Atom> = atoms.iter().collect();
    if t.nodes.iter().any(|a| !set.contains(a)) {
        return false;
    }
    let labels: BTreeSet<&Atom> = t.nodes.iter().collect();
    if set.iter().any(|a| !labels.contains(a)) {
        return false;
    }
    // Parent pointers must be acyclic.
    for start in 0..n {
        let mut cur = start;
        let mut steps = 0;
        while let Some(p) = t.parent[cur] {
            if p >= n || steps > n {
                return false;
            }
            cur = p;
            steps += 1;
        }
    }
    let mut node_count: HashMap<&Term, usize> = HashMap::new();
    let mut edge_count: HashMap<&Term, usize> = HashMap::new();
    for (i, a) in t.nodes.iter().enumerate() {
        let mine = labeled(a);
        for tm in &mine {
            *node_count.entry(tm).or_default() += 1;
        }
        if let Some(p) = t.parent[i] {
            let theirs = labeled(&t.nodes[p]);
            for tm in mine.intersection(&theirs) {
                *edge_count.entry(tm).or_default() += 1;
            }
        }
    }
    node_count
        .iter()
        .all(|(tm, &nodes)| edge_count.get(tm).copied().unwrap_or(0) + 1 == nodes)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompactError {
    #[error("the tree is not a join tree of the target")]
    InvalidTree,
    #[error("the mapping does not send atom `{0}` into the target")]
    NotAHomomorphism(String),
    #[error("free variable `{0}` is mapped to a rigid constant")]
    RigidFreeImage(String),
}

/// Compaction: from a homomorphism `h` of `q` into an acyclic
/// `target` with join tree `tree`, builds an acyclic `q'` with
/// `|q'| ≤ 2·|q|` that `q` maps into and that holds at `h(x̄)`.
///
/// Kept nodes: images of `q`'s atoms, roots, leaves and branching nodes of
/// the subforest spanned by the images and their ancestors. Every other
/// node lies on a unary chain and is contracted away.
pub fn compact_witness(
    q: &Cq,
    target: &[Atom],
    tree: &JoinTree,
    h: &Mapping,
) -> Result<Cq, CompactError> {
    if !validate_join_tree(target, tree) {
        return Err(CompactError::InvalidTree);
    }
    let apply = |t: &Term| h.get(t).cloned().unwrap_or_else(|| t.clone());
    let node_of: HashMap<&Atom, usize> = tree.nodes.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut images = BTreeSet::new();
    for a in q.atoms() {
        let img = a.map_terms(apply);
        match node_of.get(&img) {
            Some(&i) => {
                images.insert(i);
            }
            None => return Err(CompactError::NotAHomomorphism(a.to_string())),
        }
    }
    for v in &q.free {
        if apply(&Term::Var(v.clone())).is_rigid() {
            return Err(CompactError::RigidFreeImage(v.to_string()));
        }
    }

    let mut in_tq = vec![false; tree.nodes.len()];
    for &i in &images {
        let mut cur = Some(i);
        while let Some(c) = cur {
            if in_tq[c] {
                break;
            }
            in_tq[c] = true;
            cur = tree.parent[c];
        }
    }
    let mut child_count = vec![0usize; tree.nodes.len()];
    for (i, p) in tree.parent.iter().enumerate() {
        if let (true, Some(p)) = (in_tq[i], p) {
            child_count[*p] += 1;
        }
    }
    let kept: BTreeSet<usize> = (0..tree.nodes.len())
        .filter(|&i| {
            in_tq[i]
                && (images.contains(&i)
                    || tree.parent[i].is_none()
                    || child_count[i] != 1)
        })
        .collect();

    let mut names: BTreeMap<Term, Name> = BTreeMap::new();
    let fresh = |t: &Term, names: &mut BTreeMap<Term, Name>| -> Term {
        if t.is_rigid() {
            return t.clone();
        }
        let n = names.len();
        Term::Var(names.entry(t.clone()).or_insert_with(|| name(&format!("V{n}"))).clone())
    };
    let free: Vec<Name> = q
        .free
        .iter()
        .map(|v| match fresh(&apply(&Term::Var(v.clone())), &mut names) {
            Term::Var(n) => n,
            _ => unreachable!("free images are non-rigid"),
        })
        .collect();
    let atoms: Vec<Atom> = kept
        .iter()
        .map(|&i| tree.nodes[i].map_terms(|t| fresh(t, &mut names)))
        .collect();
    Ok(Cq::from_parts(q.name.clone(), free, atoms))
}

/// Contracted forest over the kept nodes (for inspection and tests).
pub fn contract(tree: &JoinTree, kept: &BTreeSet<usize>) -> JoinTree {
    let index: BTreeMap<usize, usize> = kept.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let nodes = kept.iter().map(|&i| tree.nodes[i].clone()).collect();
    let parent = kept
        .iter()
        .map(|&i| {
            let mut cur = tree.parent[i];
            while let Some(c) = cur {
                if let Some(&k) = index.get(&c) {
                    return Some(k);
                }
                cur = tree.parent[c];
            }
            None
        })
        .collect();
    JoinTree { nodes, parent }
}
