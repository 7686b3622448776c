//! The chase: breadth-first tgd and egd steps with budgets, the guarded
//! chase forest, and model checking.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::acyclicity::JoinTree;
use crate::containment::hom::{apply, find_homomorphism, for_each_homomorphism, AtomIndex, Mapping};
use crate::model::{canonical_database, Atom, Cq, DepId, DependencySet, Instance, Name, Term, Tgd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Restricted,
    Oblivious,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ChasePolicy {
    pub variant: Variant,
    /// Maximum number of tgd applications.
    pub max_steps: Option<usize>,
    /// Maximum level of a produced atom.
    pub max_depth: Option<usize>,
}

impl ChasePolicy {
    pub fn unbounded() -> ChasePolicy {
        ChasePolicy::default()
    }

    pub fn depth(d: usize) -> ChasePolicy {
        ChasePolicy {
            max_depth: Some(d),
            ..ChasePolicy::default()
        }
    }

    pub fn has_budget(&self) -> bool {
        self.max_steps.is_some() || self.max_depth.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChaseStatus {
    Saturated,
    BudgetExhausted,
    Failed,
}

impl std::fmt::Display for ChaseStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChaseStatus::Saturated => "saturated",
            ChaseStatus::BudgetExhausted => "budget_exhausted",
            ChaseStatus::Failed => "failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriggerRecord {
    pub dep: DepId,
    /// Image of the body variables, sorted by variable name.
    pub assignment: Vec<(Name, Term)>,
    /// Image of the guard atom, for guarded tgds.
    pub guard: Option<Atom>,
    pub produced: Vec<Atom>,
}

#[derive(Clone, Debug)]
pub struct ChaseResult {
    pub instance: Instance,
    pub status: ChaseStatus,
    pub depth_of: BTreeMap<Atom, usize>,
    /// Every term replaced by an egd step, mapped to its final representative.
    pub merges: BTreeMap<Term, Term>,
    pub trigger_log: Vec<TriggerRecord>,
    pub steps: usize,
}

impl ChaseResult {
    pub fn resolve(&self, t: &Term) -> Term {
        self.merges.get(t).cloned().unwrap_or_else(|| t.clone())
    }

    pub fn is_saturated(&self) -> bool {
        self.status == ChaseStatus::Saturated
    }

    pub fn max_depth(&self) -> usize {
        self.depth_of.values().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChaseError {
    #[error("termination of the chase is not guaranteed for this dependency set; set max_steps or max_depth")]
    BudgetRequired,
    #[error("the guarded chase forest needs a guarded set of tgds")]
    NotGuarded,
}

struct State {
    atoms: Vec<Atom>,
    level: HashMap<Atom, usize>,
    index: AtomIndex,
    fired: HashSet<(usize, Vec<Term>)>,
    merges: BTreeMap<Term, Term>,
    next_null: u32,
    log: Vec<TriggerRecord>,
    steps: usize,
}

impl State {
    fn new(inst: &Instance) -> State {
        let atoms = inst.atoms();
        let next_null = inst
            .terms()
            .iter()
            .filter_map(|t| match t {
                Term::Null(n) => Some(*n),
                _ => None,
            })
            .max()
            .map_or(1, |m| m + 1);
        State {
            index: AtomIndex::new(&atoms),
            level: atoms.iter().map(|a| (a.clone(), 0)).collect(),
            atoms,
            fired: HashSet::new(),
            merges: BTreeMap::new(),
            next_null,
            log: Vec::new(),
            steps: 0,
        }
    }

    fn add(&mut self, atom: Atom, level: usize) -> bool {
        if self.level.contains_key(&atom) {
            return false;
        }
        self.level.insert(atom.clone(), level);
        self.index.push(atom.clone());
        self.atoms.push(atom);
        true
    }

    /// Applies egds to a fixpoint. Returns `false` on a hard violation.
    fn egd_fixpoint(&mut self, deps: &DependencySet) -> bool {
        if deps.egds.is_empty() {
            return true;
        }
        loop {
            let mut pairs = Vec::new();
            for e in &deps.egds {
                let (l, r) = (Term::Var(e.lhs.clone()), Term::Var(e.rhs.clone()));
                for_each_homomorphism(&e.body, &self.index, &Mapping::new(), |m| {
                    let (a, b) = (apply(m, &l), apply(m, &r));
                    if a != b {
                        pairs.push((a, b));
                    }
                    true
                });
            }
            if pairs.is_empty() {
                return true;
            }
            let mut subst: BTreeMap<Term, Term> = BTreeMap::new();
            fn find(s: &BTreeMap<Term, Term>, t: &Term) -> Term {
                let mut cur = t.clone();
                while let Some(n) = s.get(&cur) {
                    cur = n.clone();
                }
                cur
            }
            for (a, b) in pairs {
                let (a, b) = (find(&subst, &a), find(&subst, &b));
                if a == b {
                    continue;
                }
                let Some((keep, drop)) = pick_representative(a, b) else {
                    return false;
                };
                subst.insert(drop, keep);
            }
            let resolved: BTreeMap<Term, Term> =
                subst.keys().map(|k| (k.clone(), find(&subst, k))).collect();
            for v in self.merges.values_mut() {
                if let Some(r) = resolved.get(v) {
                    *v = r.clone();
                }
            }
            for (k, v) in &resolved {
                self.merges.insert(k.clone(), v.clone());
            }
            let sub = |t: &Term| resolved.get(t).cloned().unwrap_or_else(|| t.clone());
            let old = std::mem::take(&mut self.atoms);
            let old_level = std::mem::take(&mut self.level);
            self.index = AtomIndex::default();
            for a in old {
                let lvl = old_level[&a];
                let b = a.map_terms(sub);
                match self.level.get_mut(&b) {
                    Some(l) => *l = (*l).min(lvl),
                    None => {
                        self.level.insert(b.clone(), lvl);
                        self.index.push(b.clone());
                        self.atoms.push(b);
                    }
                }
            }
            self.fired = std::mem::take(&mut self.fired)
                .into_iter()
                .map(|(i, img)| (i, img.iter().map(sub).collect()))
                .collect();
        }
    }
}

fn rank(t: &Term) -> u8 {
    match t {
        Term::Const(_) => 0,
        Term::Frozen(_) => 1,
        Term::Null(_) => 2,
        Term::Var(_) => 3,
    }
}

/// Which of two terms survives an egd step; `None` if both are rigid.
fn pick_representative(a: Term, b: Term) -> Option<(Term, Term)> {
    if a.is_rigid() && b.is_rigid() {
        return None;
    }
    let (ra, rb) = (rank(&a), rank(&b));
    if (ra, &a) <= (rb, &b) {
        Some((a, b))
    } else {
        Some((b, a))
    }
}

struct Trigger {
    level: usize,
    tgd: usize,
    image: Vec<Term>,
    assignment: Mapping,
}

fn body_vars(t: &Tgd) -> Vec<Name> {
    t.body_variables().into_iter().collect()
}

/// Chases `inst` with `deps` under `policy`.
pub fn chase(inst: &Instance, deps: &DependencySet, policy: &ChasePolicy) -> Result<ChaseResult, ChaseError> {
    if !deps.labels().terminating_chase && !policy.has_budget() {
        return Err(ChaseError::BudgetRequired);
    }
    let mut st = State::new(inst);
    let vars: Vec<Vec<Name>> = deps.tgds.iter().map(body_vars).collect();
    let guards: Vec<Option<usize>> = deps.tgds.iter().map(Tgd::guard).collect();
    let existentials: Vec<BTreeSet<Name>> = deps.tgds.iter().map(Tgd::existentials).collect();

    let status = 'outer: loop {
        if !st.egd_fixpoint(deps) {
            break ChaseStatus::Failed;
        }
        let mut triggers = Vec::new();
        for (ti, tgd) in deps.tgds.iter().enumerate() {
            for_each_homomorphism(&tgd.body, &st.index, &Mapping::new(), |m| {
                let image: Vec<Term> = vars[ti].iter().map(|v| apply(m, &Term::Var(v.clone()))).collect();
                if !st.fired.contains(&(ti, image.clone())) {
                    let level = 1 + tgd
                        .body
                        .iter()
                        .map(|a| st.level[&a.map_terms(|t| apply(m, t))])
                        .max()
                        .unwrap_or(0);
                    triggers.push(Trigger {
                        level,
                        tgd: ti,
                        image,
                        assignment: m.clone(),
                    });
                }
                true
            });
        }
        triggers.sort_by(|a, b| (a.level, a.tgd, &a.image).cmp(&(b.level, b.tgd, &b.image)));
        let mut blocked = false;
        let mut changed = false;
        for trig in triggers {
            if policy.max_depth.is_some_and(|d| trig.level > d) {
                blocked = true;
                continue;
            }
            if policy.max_steps.is_some_and(|s| st.steps >= s) {
                break 'outer ChaseStatus::BudgetExhausted;
            }
            let tgd = &deps.tgds[trig.tgd];
            st.fired.insert((trig.tgd, trig.image.clone()));
            if policy.variant == Variant::Restricted {
                let fix: Mapping = trig
                    .assignment
                    .iter()
                    .filter(|(k, _)| matches!(k, Term::Var(v) if !existentials[trig.tgd].contains(v)))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                if find_homomorphism(&tgd.head, &st.index, &fix).is_some() {
                    continue;
                }
            }
            let mut m = trig.assignment.clone();
            for z in &existentials[trig.tgd] {
                m.insert(Term::Var(z.clone()), Term::Null(st.next_null));
                st.next_null += 1;
            }
            let mut produced = Vec::new();
            for h in &tgd.head {
                let a = h.map_terms(|t| apply(&m, t));
                if st.add(a.clone(), trig.level) {
                    produced.push(a);
                }
            }
            st.steps += 1;
            changed = true;
            st.log.push(TriggerRecord {
                dep: DepId::Tgd(trig.tgd),
                assignment: vars[trig.tgd]
                    .iter()
                    .cloned()
                    .zip(trig.image.iter().cloned())
                    .collect(),
                guard: guards[trig.tgd].map(|g| tgd.body[g].map_terms(|t| apply(&trig.assignment, t))),
                produced,
            });
        }
        if !changed {
            break if blocked {
                ChaseStatus::BudgetExhausted
            } else {
                ChaseStatus::Saturated
            };
        }
    };

    let depth_of: BTreeMap<Atom, usize> = st.level.iter().map(|(a, l)| (a.clone(), *l)).collect();
    Ok(ChaseResult {
        instance: st.atoms.iter().cloned().collect(),
        status,
        depth_of,
        merges: st.merges,
        trigger_log: st.log,
        steps: st.steps,
    })
}

/// Chases the canonical database of `q`; also returns the image of the
/// frozen free tuple after egd merges.
pub fn chase_query(q: &Cq, deps: &DependencySet, policy: &ChasePolicy) -> Result<(ChaseResult, Vec<Term>), ChaseError> {
    let (inst, tuple) = canonical_database(q);
    let res = chase(&inst, deps, policy)?;
    let tuple = tuple.iter().map(|t| res.resolve(t)).collect();
    Ok((res, tuple))
}

/// The guarded chase forest: roots are `q`'s atoms, and each atom produced
/// by a trigger hangs below the image of that trigger's guard.
#[derive(Clone, Debug)]
pub struct ChaseForest {
    pub atoms: Vec<Atom>,
    pub parent: Vec<Option<usize>>,
    pub result: ChaseResult,
}

impl ChaseForest {
    pub fn edges(&self) -> usize {
        self.parent.iter().filter(|p| p.is_some()).count()
    }

    /// Hangs the forest below a join tree of `q`: every root atom is
    /// identified with the tree node carrying the same label.
    pub fn attach_to(&self, q_tree: &JoinTree) -> JoinTree {
        let mut nodes = q_tree.nodes.clone();
        let mut parent = q_tree.parent.clone();
        let mut placed: Vec<Option<usize>> = {
            let id: HashMap<&Atom, usize> = nodes.iter().enumerate().map(|(i, a)| (a, i)).collect();
            self.atoms
                .iter()
                .enumerate()
                .map(|(i, a)| if self.parent[i].is_none() { id.get(a).copied() } else { None })
                .collect()
        };
        let mut new_nodes = Vec::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if placed[i].is_none() {
                let n = nodes.len() + new_nodes.len();
                new_nodes.push(a.clone());
                placed[i] = Some(n);
            }
        }
        nodes.extend(new_nodes);
        parent.resize(nodes.len(), None);
        for (i, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                parent[placed[i].unwrap()] = placed[*p];
            }
        }
        JoinTree { nodes, parent }
    }
}

pub fn guarded_chase_forest(q: &Cq, deps: &DependencySet, depth: usize) -> Result<ChaseForest, ChaseError> {
    if !deps.egds.is_empty() || !deps.labels().guarded {
        return Err(ChaseError::NotGuarded);
    }
    let (inst, _) = canonical_database(q);
    let res = chase(&inst, deps, &ChasePolicy::depth(depth))?;
    let mut atoms = inst.atoms();
    let mut parent: Vec<Option<usize>> = vec![None; atoms.len()];
    let mut pos: HashMap<Atom, usize> = atoms.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
    for rec in &res.trigger_log {
        let g = rec.guard.as_ref().expect("guarded tgds record their guard");
        let gp = pos[g];
        for a in &rec.produced {
            pos.insert(a.clone(), atoms.len());
            atoms.push(a.clone());
            parent.push(Some(gp));
        }
    }
    Ok(ChaseForest {
        atoms,
        parent,
        result: res,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub dep: DepId,
    pub assignment: Vec<(String, String)>,
}

/// All body matches that violate a dependency.
pub fn satisfies(inst: &Instance, deps: &DependencySet) -> Vec<Violation> {
    let idx = AtomIndex::from_instance(inst);
    let mut out = Vec::new();
    let show = |m: &Mapping| {
        m.iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect::<Vec<_>>()
    };
    for (i, t) in deps.tgds.iter().enumerate() {
        let ex = t.existentials();
        for_each_homomorphism(&t.body, &idx, &Mapping::new(), |m| {
            let fix: Mapping = m
                .iter()
                .filter(|(k, _)| matches!(k, Term::Var(v) if !ex.contains(v)))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if find_homomorphism(&t.head, &idx, &fix).is_none() {
                out.push(Violation {
                    dep: DepId::Tgd(i),
                    assignment: show(m),
                });
            }
            true
        });
    }
    for (i, e) in deps.egds.iter().enumerate() {
        let (l, r) = (Term::Var(e.lhs.clone()), Term::Var(e.rhs.clone()));
        for_each_homomorphism(&e.body, &idx, &Mapping::new(), |m| {
            if apply(m, &l) != apply(m, &r) {
                out.push(Violation {
                    dep: DepId::Egd(i),
                    assignment: show(m),
                });
            }
            true
        });
    }
    out
}
