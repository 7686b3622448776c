//! Terms, atoms, queries, dependencies and instances.
//!
//! Everything here is immutable once built. Conjunctive queries and
//! instances keep their atoms as canonically ordered sets (predicate name,
//! then argument order); dependencies keep the atom order they were written
//! in, deduplicated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::classify::{self, ClassLabels};

/// Interned-ish symbol used for predicate, variable and constant names.
pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("query `{0}` has no atoms")]
    EmptyQuery(String),
    #[error("free variable `{var}` of `{query}` does not occur in any atom")]
    UnsafeFreeVariable { query: String, var: String },
    #[error("atom `{0}` contains a null or frozen term where only variables and constants are allowed")]
    IllegalTerm(String),
    #[error("dependency has an empty body or head")]
    EmptyDependency,
    #[error("egd side `{0}` is not a body variable")]
    EgdTermNotInBody(String),
    #[error("degenerate egd `{0} = {0}`")]
    DegenerateEgd(String),
    #[error("predicate `{pred}` used with arity {found}, expected {expected}")]
    ArityMismatch { pred: String, expected: usize, found: usize },
    #[error("union `{0}` mixes disjuncts with different numbers of free variables")]
    UcqArity(String),
}

/// A term: a query variable, a rigid constant, a frozen constant standing
/// for a query variable in a canonical database, or a labelled null.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Term {
    Var(Name),
    Const(Name),
    Frozen(Name),
    Null(u32),
}

impl Term {
    pub fn var(s: &str) -> Term {
        Term::Var(name(s))
    }

    pub fn constant(s: &str) -> Term {
        Term::Const(name(s))
    }

    pub fn frozen(s: &str) -> Term {
        Term::Frozen(name(s))
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    /// Rigid constants are the only terms a homomorphism must fix and the
    /// only ones exempt from the join-tree connectedness condition.
    pub fn is_rigid(&self) -> bool {
        matches!(self, Term::Const(_))
    }

    pub fn as_var(&self) -> Option<&Name> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }
}

pub(crate) fn is_plain_constant(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c.is_ascii_digit() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) if is_plain_constant(c) => write!(f, "{c}"),
            Term::Const(c) => {
                f.write_str("\"")?;
                for ch in c.chars() {
                    match ch {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        _ => write!(f, "{ch}")?,
                    }
                }
                f.write_str("\"")
            }
            Term::Frozen(v) => write!(f, "c_{v}"),
            Term::Null(n) => write!(f, "_n{n}"),
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Atom {
    pub predicate: Name,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: &str, args: Vec<Term>) -> Atom {
        Atom { predicate: name(predicate), args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn variables(&self) -> impl Iterator<Item = &Name> {
        self.args.iter().filter_map(Term::as_var)
    }

    /// Terms that take part in the join-tree connectedness condition.
    pub fn labeled_terms(&self) -> BTreeSet<&Term> {
        self.args.iter().filter(|t| !t.is_rigid()).collect()
    }

    pub fn map_terms(&self, mut f: impl FnMut(&Term) -> Term) -> Atom {
        Atom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(&mut f).collect(),
        }
    }

    pub fn is_query_atom(&self) -> bool {
        self.args
            .iter()
            .all(|t| matches!(t, Term::Var(_) | Term::Const(_)))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

impl Serialize for Atom {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn check_query_atoms(atoms: &[Atom]) -> Result<(), ModelError> {
    match atoms.iter().find(|a| !a.is_query_atom()) {
        Some(a) => Err(ModelError::IllegalTerm(a.to_string())),
        None => Ok(()),
    }
}

fn sorted_set(atoms: impl IntoIterator<Item = Atom>) -> Vec<Atom> {
    let set: BTreeSet<Atom> = atoms.into_iter().collect();
    set.into_iter().collect()
}

fn dedup_in_order(atoms: Vec<Atom>) -> Vec<Atom> {
    let mut seen = BTreeSet::new();
    atoms.into_iter().filter(|a| seen.insert(a.clone())).collect()
}

/// A conjunctive query `q(x̄) :- R1(v̄1), ..., Rm(v̄m)`.
///
/// The free tuple may repeat a variable; this happens when an egd chase
/// equates two answer positions.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Cq {
    pub name: Name,
    pub free: Vec<Name>,
    atoms: Vec<Atom>,
}

impl Cq {
    pub fn new(name: &str, free: Vec<Name>, atoms: Vec<Atom>) -> Result<Cq, ModelError> {
        check_query_atoms(&atoms)?;
        let cq = Cq::from_parts(super::model::name(name), free, atoms);
        if cq.atoms.is_empty() {
            return Err(ModelError::EmptyQuery(name.to_string()));
        }
        let vars = cq.variables();
        if let Some(v) = cq.free.iter().find(|v| !vars.contains(*v)) {
            return Err(ModelError::UnsafeFreeVariable {
                query: name.to_string(),
                var: v.to_string(),
            });
        }
        Ok(cq)
    }

    /// Builds a query without the safety checks; used for intermediate
    /// structures (partial candidates, rewriting steps).
    pub fn from_parts(name: Name, free: Vec<Name>, atoms: impl IntoIterator<Item = Atom>) -> Cq {
        Cq {
            name,
            free,
            atoms: sorted_set(atoms),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `|q|`, the number of atoms.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_boolean(&self) -> bool {
        self.free.is_empty()
    }

    pub fn free_terms(&self) -> Vec<Term> {
        self.free.iter().map(|v| Term::Var(v.clone())).collect()
    }

    pub fn variables(&self) -> BTreeSet<Name> {
        self.atoms
            .iter()
            .flat_map(|a| a.variables().cloned())
            .collect()
    }

    pub fn existential_variables(&self) -> BTreeSet<Name> {
        let free: BTreeSet<&Name> = self.free.iter().collect();
        self.variables()
            .into_iter()
            .filter(|v| !free.contains(v))
            .collect()
    }

    pub fn constants(&self) -> BTreeSet<Name> {
        self.atoms
            .iter()
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn predicates(&self) -> BTreeMap<Name, usize> {
        self.atoms
            .iter()
            .map(|a| (a.predicate.clone(), a.arity()))
            .collect()
    }

    pub fn with_name(&self, name: &str) -> Cq {
        Cq {
            name: super::model::name(name),
            ..self.clone()
        }
    }

    /// Applies a variable renaming/substitution to atoms and free tuple.
    /// Free variables must map to variables.
    pub fn substitute(&self, f: impl Fn(&Term) -> Term) -> Cq {
        let free = self
            .free
            .iter()
            .map(|v| match f(&Term::Var(v.clone())) {
                Term::Var(w) => w,
                other => panic!("free variable {v} mapped to non-variable {other}"),
            })
            .collect();
        Cq::from_parts(
            self.name.clone(),
            free,
            self.atoms.iter().map(|a| a.map_terms(&f)),
        )
    }
}

/// A union of conjunctive queries over the same answer arity.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Ucq {
    pub name: Name,
    pub disjuncts: Vec<Cq>,
}

impl Ucq {
    pub fn new(name: &str, disjuncts: Vec<Cq>) -> Result<Ucq, ModelError> {
        let Some(first) = disjuncts.first() else {
            return Err(ModelError::EmptyQuery(name.to_string()));
        };
        if disjuncts.iter().any(|d| d.free.len() != first.free.len()) {
            return Err(ModelError::UcqArity(name.to_string()));
        }
        Ok(Ucq {
            name: super::model::name(name),
            disjuncts,
        })
    }

    pub fn arity(&self) -> usize {
        self.disjuncts[0].free.len()
    }

    pub fn single(cq: Cq) -> Ucq {
        Ucq {
            name: cq.name.clone(),
            disjuncts: vec![cq],
        }
    }
}

/// `φ(x̄,ȳ) → ∃z̄ ψ(x̄,z̄)`; existentials are the head-only variables.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Tgd {
    pub body: Vec<Atom>,
    pub head: Vec<Atom>,
}

impl Tgd {
    pub fn new(body: Vec<Atom>, head: Vec<Atom>) -> Result<Tgd, ModelError> {
        check_query_atoms(&body)?;
        check_query_atoms(&head)?;
        if body.is_empty() || head.is_empty() {
            return Err(ModelError::EmptyDependency);
        }
        Ok(Tgd {
            body: dedup_in_order(body),
            head: dedup_in_order(head),
        })
    }

    pub fn body_variables(&self) -> BTreeSet<Name> {
        self.body.iter().flat_map(|a| a.variables().cloned()).collect()
    }

    pub fn head_variables(&self) -> BTreeSet<Name> {
        self.head.iter().flat_map(|a| a.variables().cloned()).collect()
    }

    pub fn frontier(&self) -> BTreeSet<Name> {
        let head = self.head_variables();
        self.body_variables()
            .into_iter()
            .filter(|v| head.contains(v))
            .collect()
    }

    pub fn existentials(&self) -> BTreeSet<Name> {
        let body = self.body_variables();
        self.head_variables()
            .into_iter()
            .filter(|v| !body.contains(v))
            .collect()
    }

    /// Index of the first body atom holding every body variable.
    pub fn guard(&self) -> Option<usize> {
        let vars = self.body_variables();
        self.body.iter().position(|a| {
            let here: BTreeSet<&Name> = a.variables().collect();
            vars.iter().all(|v| here.contains(v))
        })
    }
}

/// `φ(x̄) → x_i = x_j`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Egd {
    pub body: Vec<Atom>,
    pub lhs: Name,
    pub rhs: Name,
}

impl Egd {
    pub fn new(body: Vec<Atom>, lhs: &str, rhs: &str) -> Result<Egd, ModelError> {
        check_query_atoms(&body)?;
        if body.is_empty() {
            return Err(ModelError::EmptyDependency);
        }
        if lhs == rhs {
            return Err(ModelError::DegenerateEgd(lhs.to_string()));
        }
        let vars: BTreeSet<Name> = body.iter().flat_map(|a| a.variables().cloned()).collect();
        for side in [lhs, rhs] {
            if !vars.contains(side) {
                return Err(ModelError::EgdTermNotInBody(side.to_string()));
            }
        }
        Ok(Egd {
            body: dedup_in_order(body),
            lhs: name(lhs),
            rhs: name(rhs),
        })
    }

    /// The functional-dependency reading `R : A → {j}` (1-based positions),
    /// when the egd has exactly that shape.
    pub fn as_fd(&self) -> Option<FdView> {
        let [a, b] = self.body.as_slice() else {
            return None;
        };
        if a.predicate != b.predicate || a.args.is_empty() {
            return None;
        }
        let distinct = |atom: &Atom| {
            let vars: BTreeSet<&Term> = atom.args.iter().collect();
            vars.len() == atom.arity() && atom.args.iter().all(Term::is_var)
        };
        if !distinct(a) || !distinct(b) {
            return None;
        }
        let mut lhs = Vec::new();
        for (i, (s, t)) in a.args.iter().zip(&b.args).enumerate() {
            if s == t {
                lhs.push(i + 1);
            } else if a.args.contains(t) || b.args.contains(s) {
                return None;
            }
        }
        let l = Term::Var(self.lhs.clone());
        let r = Term::Var(self.rhs.clone());
        let pos = (0..a.arity()).find(|&i| {
            (a.args[i] == l && b.args[i] == r) || (a.args[i] == r && b.args[i] == l)
        })?;
        if lhs.contains(&(pos + 1)) {
            return None;
        }
        Some(FdView {
            predicate: a.predicate.clone(),
            arity: a.arity(),
            lhs,
            rhs: pos + 1,
        })
    }
}

/// An egd read as a functional dependency `R : lhs → {rhs}`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize)]
pub struct FdView {
    #[serde(serialize_with = "ser_name")]
    pub predicate: Name,
    pub arity: usize,
    pub lhs: Vec<usize>,
    pub rhs: usize,
}

fn ser_name<S: Serializer>(n: &Name, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(n)
}

/// Identifies one dependency of a [`DependencySet`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize)]
pub enum DepId {
    Tgd(usize),
    Egd(usize),
}

impl fmt::Display for DepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepId::Tgd(i) => write!(f, "tgd#{i}"),
            DepId::Egd(i) => write!(f, "egd#{i}"),
        }
    }
}

#[derive(Debug, Default)]
pub struct DependencySet {
    pub tgds: Vec<Tgd>,
    pub egds: Vec<Egd>,
    labels: OnceLock<ClassLabels>,
}

impl Clone for DependencySet {
    fn clone(&self) -> Self {
        DependencySet::new(self.tgds.clone(), self.egds.clone())
    }
}

impl PartialEq for DependencySet {
    fn eq(&self, other: &Self) -> bool {
        self.tgds == other.tgds && self.egds == other.egds
    }
}

impl DependencySet {
    pub fn new(tgds: Vec<Tgd>, egds: Vec<Egd>) -> DependencySet {
        DependencySet {
            tgds,
            egds,
            labels: OnceLock::new(),
        }
    }

    pub fn empty() -> DependencySet {
        DependencySet::default()
    }

    pub fn from_tgds(tgds: Vec<Tgd>) -> DependencySet {
        DependencySet::new(tgds, Vec::new())
    }

    pub fn from_egds(egds: Vec<Egd>) -> DependencySet {
        DependencySet::new(Vec::new(), egds)
    }

    pub fn is_empty(&self) -> bool {
        self.tgds.is_empty() && self.egds.is_empty()
    }

    pub fn is_mixed(&self) -> bool {
        !self.tgds.is_empty() && !self.egds.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tgds.len() + self.egds.len()
    }

    /// The dependencies that can ever fire on an instance over `preds`:
    /// tgds are followed transitively, and a dependency is kept once all
    /// of its body predicates are reachable.
    pub fn relevant_to<'a>(&self, preds: impl IntoIterator<Item = &'a Name>) -> DependencySet {
        let mut reach: BTreeSet<Name> = preds.into_iter().cloned().collect();
        let fires = |body: &[Atom], reach: &BTreeSet<Name>| body.iter().all(|a| reach.contains(&a.predicate));
        let mut tgds = vec![false; self.tgds.len()];
        loop {
            let mut grew = false;
            for (i, t) in self.tgds.iter().enumerate() {
                if !tgds[i] && fires(&t.body, &reach) {
                    tgds[i] = true;
                    grew = true;
                    reach.extend(t.head.iter().map(|a| a.predicate.clone()));
                }
            }
            if !grew {
                break;
            }
        }
        DependencySet::new(
            self.tgds.iter().zip(&tgds).filter(|(_, &k)| k).map(|(t, _)| t.clone()).collect(),
            self.egds.iter().filter(|e| fires(&e.body, &reach)).cloned().collect(),
        )
    }

    /// Classification, computed once per set.
    pub fn labels(&self) -> &ClassLabels {
        self.labels.get_or_init(|| classify::classify(self))
    }

    pub fn predicates(&self) -> BTreeMap<Name, usize> {
        let tgd_atoms = self.tgds.iter().flat_map(|t| t.body.iter().chain(&t.head));
        let egd_atoms = self.egds.iter().flat_map(|e| e.body.iter());
        tgd_atoms
            .chain(egd_atoms)
            .map(|a| (a.predicate.clone(), a.arity()))
            .collect()
    }

    pub fn constants(&self) -> BTreeSet<Name> {
        let tgd_atoms = self.tgds.iter().flat_map(|t| t.body.iter().chain(&t.head));
        let egd_atoms = self.egds.iter().flat_map(|e| e.body.iter());
        tgd_atoms
            .chain(egd_atoms)
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                _ => None,
            })
            .collect()
    }

    /// Largest body size over all dependencies (`b_Σ`).
    pub fn max_body_size(&self) -> usize {
        let t = self.tgds.iter().map(|t| t.body.len());
        let e = self.egds.iter().map(|e| e.body.len());
        t.chain(e).max().unwrap_or(0)
    }
}

/// A finite set of atoms over constants, frozen constants and nulls.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Instance {
    atoms: BTreeSet<Atom>,
}

impl Instance {
    pub fn new() -> Instance {
        Instance::default()
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        debug_assert!(atom.args.iter().all(|t| !t.is_var()));
        self.atoms.insert(atom)
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn atoms(&self) -> Vec<Atom> {
        self.atoms.iter().cloned().collect()
    }

    pub fn terms(&self) -> BTreeSet<Term> {
        self.atoms.iter().flat_map(|a| a.args.iter().cloned()).collect()
    }

    pub fn predicates(&self) -> BTreeMap<Name, usize> {
        self.atoms
            .iter()
            .map(|a| (a.predicate.clone(), a.arity()))
            .collect()
    }
}

impl FromIterator<Atom> for Instance {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        Instance {
            atoms: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Instance {
    type Item = &'a Atom;
    type IntoIter = std::collections::btree_set::Iter<'a, Atom>;

    fn into_iter(self) -> Self::IntoIter {
        self.atoms.iter()
    }
}

/// Replaces every variable `x` by the frozen constant `c(x)`; returns the
/// instance and the frozen image of the free tuple.
pub fn canonical_database(q: &Cq) -> (Instance, Vec<Term>) {
    let freeze = |t: &Term| match t {
        Term::Var(v) => Term::Frozen(v.clone()),
        other => other.clone(),
    };
    let inst = q.atoms().iter().map(|a| a.map_terms(freeze)).collect();
    let tuple = q.free.iter().map(|v| Term::Frozen(v.clone())).collect();
    (inst, tuple)
}

/// Groups atom indices into maximal sets connected through shared
/// variables. Variable-free atoms form singleton groups.
pub(crate) fn variable_components(atoms: &[Atom]) -> Vec<Vec<usize>> {
    let n = atoms.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    let mut owner: BTreeMap<&Name, usize> = BTreeMap::new();
    for (i, a) in atoms.iter().enumerate() {
        for v in a.variables() {
            match owner.get(v) {
                Some(&j) => {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
                None => {
                    owner.insert(v, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Maximal connected subqueries of `q` in its Gaifman graph.
pub fn gaifman_components(q: &Cq) -> Vec<Cq> {
    variable_components(q.atoms())
        .into_iter()
        .map(|group| {
            let atoms: Vec<Atom> = group.iter().map(|&i| q.atoms()[i].clone()).collect();
            let vars: BTreeSet<&Name> = atoms.iter().flat_map(|a| a.variables()).collect();
            let free = q
                .free
                .iter()
                .filter(|v| vars.contains(v))
                .cloned()
                .collect();
            Cq::from_parts(q.name.clone(), free, atoms)
        })
        .collect()
}

pub fn is_connected(q: &Cq) -> bool {
    !q.is_empty() && variable_components(q.atoms()).len() == 1
}

/// A tgd or egd, for operations defined on both.
#[derive(Clone, Copy, Debug)]
pub enum DependencyRef<'a> {
    Tgd(&'a Tgd),
    Egd(&'a Egd),
}

impl<'a> From<&'a Tgd> for DependencyRef<'a> {
    fn from(t: &'a Tgd) -> Self {
        DependencyRef::Tgd(t)
    }
}

impl<'a> From<&'a Egd> for DependencyRef<'a> {
    fn from(e: &'a Egd) -> Self {
        DependencyRef::Egd(e)
    }
}

pub fn is_body_connected<'a>(dep: impl Into<DependencyRef<'a>>) -> bool {
    let body = match dep.into() {
        DependencyRef::Tgd(t) => &t.body,
        DependencyRef::Egd(e) => &e.body,
    };
    !body.is_empty() && variable_components(body).len() == 1
}
