//! Query evaluation: naive, Yannakakis, the existential 1-cover game, and
//! evaluation of semantically acyclic queries.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::acyclicity::{gyo, is_acyclic_cq, validate_join_tree, JoinTree};
use crate::chase::{chase_query, satisfies, ChaseError, ChasePolicy, ChaseStatus, Violation};
use crate::containment::hom::{for_each_homomorphism, AtomIndex, Mapping};
use crate::model::{canonical_database, Atom, Cq, DependencySet, Instance, Name, Term, Ucq};
use crate::semacyc::{decide_semacyc, SemAcAnswer, SemAcError, SemAcOptions};

pub type Tuple = Vec<Term>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("the join tree is not valid for the query")]
    InvalidTree,
    #[error("the database violates {} dependenc{}", .0.len(), if .0.len() == 1 { "y" } else { "ies" })]
    Violations(Vec<Violation>),
    #[error("tuple has {found} values but the query has {expected} free variables")]
    TupleArity { expected: usize, found: usize },
    #[error("the query is not known to be semantically acyclic ({0})")]
    NotSemAc(String),
    #[error("the chase of the query did not saturate")]
    Unsaturated,
    #[error(transparent)]
    Chase(#[from] ChaseError),
    #[error(transparent)]
    SemAc(#[from] SemAcError),
}

/// All answers `h(x̄)` over homomorphisms of `q` into `db`.
pub fn eval_naive(q: &Cq, db: &Instance) -> BTreeSet<Tuple> {
    let idx = AtomIndex::from_instance(db);
    let mut out = BTreeSet::new();
    let free = q.free_terms();
    for_each_homomorphism(q.atoms(), &idx, &Mapping::new(), |m| {
        out.insert(free.iter().map(|t| m[t].clone()).collect());
        true
    });
    out
}

pub fn eval_naive_ucq(q: &Ucq, db: &Instance) -> BTreeSet<Tuple> {
    q.disjuncts.iter().flat_map(|d| eval_naive(d, db)).collect()
}

/// A relation over named variables.
#[derive(Clone, Debug)]
struct Rel {
    vars: Vec<Name>,
    rows: HashSet<Vec<Term>>,
}

impl Rel {
    fn project(&self, keep: &[Name]) -> Rel {
        let pos: Vec<usize> = keep
            .iter()
            .map(|v| self.vars.iter().position(|w| w == v).expect("projected var present"))
            .collect();
        Rel {
            vars: keep.to_vec(),
            rows: self.rows.iter().map(|r| pos.iter().map(|&i| r[i].clone()).collect()).collect(),
        }
    }

    fn shared(&self, other: &Rel) -> Vec<Name> {
        self.vars.iter().filter(|v| other.vars.contains(v)).cloned().collect()
    }

    fn key(&self, row: &[Term], on: &[Name]) -> Vec<Term> {
        on.iter()
            .map(|v| row[self.vars.iter().position(|w| w == v).unwrap()].clone())
            .collect()
    }

    /// Keeps rows of `self` that join with some row of `other`.
    fn semijoin(&mut self, other: &Rel) {
        let on = self.shared(other);
        let keys: HashSet<Vec<Term>> = other.rows.iter().map(|r| other.key(r, &on)).collect();
        let this = self.clone();
        self.rows.retain(|r| keys.contains(&this.key(r, &on)));
    }

    fn join(&self, other: &Rel) -> Rel {
        let on = self.shared(other);
        let extra: Vec<Name> = other.vars.iter().filter(|v| !self.vars.contains(v)).cloned().collect();
        let extra_pos: Vec<usize> = extra
            .iter()
            .map(|v| other.vars.iter().position(|w| w == v).unwrap())
            .collect();
        let mut by_key: HashMap<Vec<Term>, Vec<&Vec<Term>>> = HashMap::new();
        for r in &other.rows {
            by_key.entry(other.key(r, &on)).or_default().push(r);
        }
        let mut rows = HashSet::new();
        for r in &self.rows {
            if let Some(ms) = by_key.get(&self.key(r, &on)) {
                for m in ms {
                    let mut row = r.clone();
                    row.extend(extra_pos.iter().map(|&i| m[i].clone()));
                    rows.insert(row);
                }
            }
        }
        let mut vars = self.vars.clone();
        vars.extend(extra);
        Rel { vars, rows }
    }
}

fn atom_relation(a: &Atom, idx: &AtomIndex) -> Rel {
    let vars: Vec<Name> = a
        .variables()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rows = HashSet::new();
    for_each_homomorphism(std::slice::from_ref(a), idx, &Mapping::new(), |m| {
        rows.insert(vars.iter().map(|v| m[&Term::Var(v.clone())].clone()).collect());
        true
    });
    Rel { vars, rows }
}

/// Yannakakis evaluation along a join tree of `q`.
pub fn eval_yannakakis(q: &Cq, tree: &JoinTree, db: &Instance) -> Result<BTreeSet<Tuple>, EvalError> {
    if !validate_join_tree(q.atoms(), tree) {
        return Err(EvalError::InvalidTree);
    }
    let idx = AtomIndex::from_instance(db);
    let mut rels: Vec<Rel> = tree.nodes.iter().map(|a| atom_relation(a, &idx)).collect();
    let order = tree.preorder();
    // Bottom-up then top-down semijoin passes.
    for &n in order.iter().rev() {
        if let Some(p) = tree.parent[n] {
            let child = rels[n].clone();
            rels[p].semijoin(&child);
        }
    }
    for &n in &order {
        if let Some(p) = tree.parent[n] {
            let parent = rels[p].clone();
            rels[n].semijoin(&parent);
        }
    }
    let free: BTreeSet<&Name> = q.free.iter().collect();
    // Free variables occurring in each subtree.
    let mut sub_free: Vec<BTreeSet<Name>> = rels
        .iter()
        .map(|r| r.vars.iter().filter(|v| free.contains(v)).cloned().collect())
        .collect();
    for &n in order.iter().rev() {
        if let Some(p) = tree.parent[n] {
            let s = sub_free[n].clone();
            sub_free[p].extend(s);
        }
    }
    let mut acc: Vec<Option<Rel>> = vec![None; rels.len()];
    let children = tree.children();
    for &n in order.iter().rev() {
        let mut r = rels[n].clone();
        for &c in &children[n] {
            r = r.join(acc[c].as_ref().expect("children done first"));
        }
        let keep: Vec<Name> = match tree.parent[n] {
            Some(p) => r
                .vars
                .iter()
                .filter(|v| rels[p].vars.contains(v) || sub_free[n].contains(*v))
                .cloned()
                .collect(),
            None => r.vars.iter().filter(|v| sub_free[n].contains(*v)).cloned().collect(),
        };
        acc[n] = Some(r.project(&keep));
    }
    let mut total = Rel {
        vars: Vec::new(),
        rows: HashSet::from([Vec::new()]),
    };
    for root in tree.roots() {
        total = total.join(acc[root].as_ref().expect("root computed"));
    }
    if tree.nodes.is_empty() {
        return Ok(BTreeSet::from([Vec::new()]));
    }
    Ok(total
        .rows
        .iter()
        .map(|row| {
            q.free
                .iter()
                .map(|v| row[total.vars.iter().position(|w| w == v).expect("free var bound")].clone())
                .collect()
        })
        .collect())
}

/// Candidate images of each left atom in the existential 1-cover game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameStrategy {
    pub images: BTreeMap<Atom, BTreeSet<Atom>>,
    pub left_tuple: Tuple,
    pub right_tuple: Tuple,
    pub rounds: usize,
}

fn local_map(from: &Atom, to: &Atom, pins: &HashMap<&Term, &Term>) -> Option<HashMap<Term, Term>> {
    if from.predicate != to.predicate || from.arity() != to.arity() {
        return None;
    }
    let mut m: HashMap<Term, Term> = HashMap::new();
    for (a, b) in from.args.iter().zip(&to.args) {
        if a.is_rigid() && a != b {
            return None;
        }
        if let Some(p) = pins.get(a) {
            if *p != b {
                return None;
            }
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

/// Greatest-fixpoint solution of the existential 1-cover game from
/// `(left, lt)` to `(right, rt)`.
pub fn game_equiv(left: &Instance, lt: &[Term], right: &Instance, rt: &[Term]) -> (bool, Option<GameStrategy>) {
    if lt.len() != rt.len() {
        return (false, None);
    }
    let mut pins: HashMap<&Term, &Term> = HashMap::new();
    for (a, b) in lt.iter().zip(rt) {
        if let Some(prev) = pins.insert(a, b) {
            if prev != b {
                return (false, None);
            }
        }
        if a.is_rigid() && a != b {
            return (false, None);
        }
    }
    let left_atoms = left.atoms();
    let right_idx = AtomIndex::from_instance(right);
    let right_atoms = right.atoms();
    // Initialization: same predicate, consistent with pins, and a
    // homomorphism of the sub-instance induced by the atom's terms.
    let mut h: Vec<Vec<(usize, HashMap<Term, Term>)>> = Vec::with_capacity(left_atoms.len());
    for a in &left_atoms {
        let terms: BTreeSet<&Term> = a.args.iter().collect();
        let induced: Vec<Atom> = left_atoms
            .iter()
            .filter(|b| b.args.iter().all(|t| terms.contains(t)))
            .cloned()
            .collect();
        let mut cands = Vec::new();
        for (j, b) in right_atoms.iter().enumerate() {
            if let Some(m) = local_map(a, b, &pins) {
                let fix: Mapping = m.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
                let ok = induced.iter().all(|c| {
                    let img = c.map_terms(|t| fix.get(t).cloned().unwrap_or_else(|| t.clone()));
                    right.contains(&img)
                });
                if ok {
                    cands.push((j, m));
                }
            }
        }
        h.push(cands);
    }
    drop(right_idx);
    // Pairs of left atoms sharing terms.
    let n = left_atoms.len();
    let shared: Vec<Vec<(usize, Vec<Term>)>> = (0..n)
        .map(|i| {
            let mine: BTreeSet<&Term> = left_atoms[i].args.iter().filter(|t| !t.is_rigid()).collect();
            (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let common: Vec<Term> = left_atoms[j]
                        .args
                        .iter()
                        .filter(|t| mine.contains(t))
                        .cloned()
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    (!common.is_empty()).then_some((j, common))
                })
                .collect()
        })
        .collect();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut changed = false;
        for i in 0..n {
            let before = h[i].len();
            let snapshot = h.clone();
            h[i].retain(|(_, m)| {
                shared[i].iter().all(|(j, common)| {
                    snapshot[*j]
                        .iter()
                        .any(|(_, m2)| common.iter().all(|t| m.get(t) == m2.get(t)))
                })
            });
            changed |= h[i].len() != before;
        }
        if !changed {
            break;
        }
    }
    let win = h.iter().all(|c| !c.is_empty());
    let images = left_atoms
        .iter()
        .zip(&h)
        .map(|(a, c)| (a.clone(), c.iter().map(|(j, _)| right_atoms[*j].clone()).collect()))
        .collect();
    (
        win,
        Some(GameStrategy {
            images,
            left_tuple: lt.to_vec(),
            right_tuple: rt.to_vec(),
            rounds,
        }),
    )
}

/// Which procedure `semac_eval` used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalPath {
    GameOnQuery,
    GameOnChase,
    Witness,
}

/// Decides `t ∈ q(D)` for `q` semantically acyclic under `Σ` and `D ⊨ Σ`.
pub fn semac_eval(
    q: &Cq,
    deps: &DependencySet,
    db: &Instance,
    t: &[Term],
    opts: &SemAcOptions,
) -> Result<(bool, EvalPath), EvalError> {
    if t.len() != q.free.len() {
        return Err(EvalError::TupleArity {
            expected: q.free.len(),
            found: t.len(),
        });
    }
    let violations = satisfies(db, deps);
    if !violations.is_empty() {
        return Err(EvalError::Violations(violations));
    }
    let labels = deps.labels();
    if deps.is_empty() || (deps.egds.is_empty() && labels.guarded) {
        let (left, lt) = canonical_database(q);
        return Ok((game_equiv(&left, &lt, db, t).0, EvalPath::GameOnQuery));
    }
    if labels.terminating_chase {
        let (res, tuple) = chase_query(q, deps, &ChasePolicy::unbounded())?;
        return match res.status {
            ChaseStatus::Failed => Ok((false, EvalPath::GameOnChase)),
            ChaseStatus::Saturated => Ok((game_equiv(&res.instance, &tuple, db, t).0, EvalPath::GameOnChase)),
            ChaseStatus::BudgetExhausted => Err(EvalError::Unsaturated),
        };
    }
    match decide_semacyc(q, deps, opts)? {
        SemAcAnswer::Yes { witness, .. } => {
            let tree = is_acyclic_cq(&witness).expect("witnesses are acyclic");
            let answers = eval_yannakakis(&witness, &tree, db)?;
            Ok((answers.contains(t), EvalPath::Witness))
        }
        other => Err(EvalError::NotSemAc(other.summary())),
    }
}

/// Evaluates an acyclic query with Yannakakis, otherwise naively.
pub fn eval_auto(q: &Cq, db: &Instance) -> BTreeSet<Tuple> {
    match gyo(q.atoms()) {
        Some(t) => eval_yannakakis(q, &t, db).expect("gyo trees are valid"),
        None => eval_naive(q, db),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn c(s: &str) -> Term {
        Term::constant(s)
    }

    #[test]
    fn naive_projection() {
        let p = parse_program("q(X) :- R(X,Y).\nR(1,2). R(3,4).").unwrap();
        let ans = eval_naive(&p.cq("q").unwrap(), &p.facts);
        assert_eq!(ans, BTreeSet::from([vec![c("1")], vec![c("3")]]));
    }

    #[test]
    fn triangle_on_loop() {
        let p = parse_program("t :- R(X,Y), R(Y,Z), R(Z,X).\nR(a,a). R(a,b). R(b,a). R(b,b).").unwrap();
        assert_eq!(eval_naive(&p.cq("t").unwrap(), &p.facts).len(), 1);
    }

    #[test]
    fn running_example_answer() {
        let p = parse_program(
            "q(X,Y) :- Interest(X,Z), Class(Y,Z), Owns(X,Y).\n\
             Interest(c,s). Class(r,s). Owns(c,r).",
        )
        .unwrap();
        let ans = eval_naive(&p.cq("q").unwrap(), &p.facts);
        assert_eq!(ans, BTreeSet::from([vec![c("c"), c("r")]]));
    }

    #[test]
    fn yannakakis_semijoin() {
        let p = parse_program("q(X) :- R(X,Y), S(Y).\nR(1,2). S(2). R(3,4).").unwrap();
        let q = p.cq("q").unwrap();
        let t = is_acyclic_cq(&q).unwrap();
        assert_eq!(eval_yannakakis(&q, &t, &p.facts).unwrap(), BTreeSet::from([vec![c("1")]]));
        assert!(eval_yannakakis(&q, &t, &Instance::new()).unwrap().is_empty());
    }

    #[test]
    fn yannakakis_boolean_and_forest() {
        let p = parse_program("q :- R(X,Y), S(U).\nR(1,2). S(5).").unwrap();
        let q = p.cq("q").unwrap();
        let t = is_acyclic_cq(&q).unwrap();
        assert_eq!(eval_yannakakis(&q, &t, &p.facts).unwrap().len(), 1);
        let p2 = parse_program("q(Y,U) :- R(X,Y), S(U).\nR(1,2). R(3,4). S(5). S(6).").unwrap();
        let q2 = p2.cq("q").unwrap();
        let t2 = is_acyclic_cq(&q2).unwrap();
        assert_eq!(eval_yannakakis(&q2, &t2, &p2.facts).unwrap(), eval_naive(&q2, &p2.facts));
    }

    #[test]
    fn game_basics() {
        let l: Instance = [Atom::new("R", vec![Term::frozen("a"), Term::frozen("b")])].into_iter().collect();
        let r: Instance = [Atom::new("R", vec![c("1"), c("2")])].into_iter().collect();
        assert!(game_equiv(&l, &[], &r, &[]).0);

        let l: Instance = [
            Atom::new("R", vec![Term::frozen("a"), Term::frozen("b")]),
            Atom::new("S", vec![Term::frozen("b")]),
        ]
        .into_iter()
        .collect();
        let r: Instance = [Atom::new("R", vec![c("1"), c("2")]), Atom::new("S", vec![c("3")])]
            .into_iter()
            .collect();
        assert!(!game_equiv(&l, &[], &r, &[]).0);
    }

    #[test]
    fn game_accepts_cycle_on_longer_cycle() {
        // A directed triangle maps onto no 4-cycle, but the duplicator
        // still wins the 1-cover game.
        let f = Term::frozen;
        let l: Instance = [("a", "b"), ("b", "c"), ("c", "a")]
            .into_iter()
            .map(|(x, y)| Atom::new("R", vec![f(x), f(y)]))
            .collect();
        let r = parse_program("R(1,2). R(2,3). R(3,4). R(4,1).").unwrap().facts;
        assert!(game_equiv(&l, &[], &r, &[]).0);
    }

    #[test]
    fn semac_eval_paths() {
        let p = parse_program(
            "Interest(X,Z), Class(Y,Z) -> Owns(X,Y).\n\
             q(X,Y) :- Interest(X,Z), Class(Y,Z), Owns(X,Y).\n\
             Interest(c,s). Class(r,s). Owns(c,r).",
        )
        .unwrap();
        let q = p.cq("q").unwrap();
        let (ans, path) = semac_eval(&q, &p.deps, &p.facts, &[c("c"), c("r")], &SemAcOptions::default()).unwrap();
        assert!(ans);
        assert_eq!(path, EvalPath::GameOnChase);

        let g = parse_program("R(X,Y) -> R(Y,Z).\nq(X) :- R(X,Y).\nR(1,2). R(2,3). R(3,1).").unwrap();
        let (ans, path) = semac_eval(&g.cq("q").unwrap(), &g.deps, &g.facts, &[c("1")], &SemAcOptions::default()).unwrap();
        assert!(ans);
        assert_eq!(path, EvalPath::GameOnQuery);

        let bad: Instance = [Atom::new("Interest", vec![c("c"), c("s")]), Atom::new("Class", vec![c("r"), c("s")])]
            .into_iter()
            .collect();
        assert!(matches!(
            semac_eval(&q, &p.deps, &bad, &[c("c"), c("r")], &SemAcOptions::default()),
            Err(EvalError::Violations(_))
        ));
    }
}
