//! The connecting operator and conjunction reduction, used to build
//! connected hard instances from containment problems.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{is_connected, name, Atom, Cq, DependencySet, Name, Term, Tgd};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConnectError {
    #[error("query `{0}` is not Boolean")]
    NotBoolean(String),
    #[error("the connecting operator applies to tgds only")]
    HasEgds,
    #[error("query `{0}` is not connected")]
    Disconnected(String),
    #[error("the queries share variables: {}", .0.join(", "))]
    SharedVariables(Vec<String>),
}

struct Names {
    star: std::collections::BTreeMap<Name, Name>,
    aux: Name,
}

fn fresh_name(base: &str, taken: &BTreeSet<Name>) -> Name {
    let mut cand = base.to_string();
    while taken.contains(cand.as_str()) {
        cand.push('_');
    }
    name(&cand)
}

fn fresh_var(base: &str, vars: &BTreeSet<Name>) -> Name {
    fresh_name(base, vars)
}

impl Names {
    fn new(q: &Cq, q2: &Cq, deps: &DependencySet) -> Names {
        let mut preds: BTreeSet<Name> = deps.predicates().into_keys().collect();
        preds.extend(q.predicates().into_keys());
        preds.extend(q2.predicates().into_keys());
        let mut taken = preds.clone();
        let mut star = std::collections::BTreeMap::new();
        for p in &preds {
            let s = fresh_name(&format!("{p}_star"), &taken);
            taken.insert(s.clone());
            star.insert(p.clone(), s);
        }
        let aux = fresh_name("aux", &taken);
        Names { star, aux }
    }

    fn starred(&self, a: &Atom, w: &Name) -> Atom {
        let mut args = a.args.clone();
        args.push(Term::Var(w.clone()));
        Atom {
            predicate: self.star[&a.predicate].clone(),
            args,
        }
    }

    fn aux(&self, x: &Name, y: &Name) -> Atom {
        Atom {
            predicate: self.aux.clone(),
            args: vec![Term::Var(x.clone()), Term::Var(y.clone())],
        }
    }
}

/// Applies the connecting operator: every atom gets an extra argument
/// `w` shared across the query, `c(q)` adds `aux(w,w)` and `c(q2)` adds
/// the directed triangle `aux(w,u), aux(u,v), aux(v,w)`.
pub fn connect(q: &Cq, q2: &Cq, deps: &DependencySet) -> Result<(Cq, Cq, DependencySet), ConnectError> {
    for c in [q, q2] {
        if !c.is_boolean() {
            return Err(ConnectError::NotBoolean(c.name.to_string()));
        }
    }
    if !deps.egds.is_empty() {
        return Err(ConnectError::HasEgds);
    }
    let names = Names::new(q, q2, deps);

    let vars = q.variables();
    let w = fresh_var("W", &vars);
    let mut atoms: Vec<Atom> = q.atoms().iter().map(|a| names.starred(a, &w)).collect();
    atoms.push(names.aux(&w, &w));
    let cq = Cq::from_parts(q.name.clone(), Vec::new(), atoms);

    let mut vars = q2.variables();
    let w2 = fresh_var("W", &vars);
    vars.insert(w2.clone());
    let u = fresh_var("U", &vars);
    vars.insert(u.clone());
    let v = fresh_var("V", &vars);
    let mut atoms: Vec<Atom> = q2.atoms().iter().map(|a| names.starred(a, &w2)).collect();
    atoms.extend([names.aux(&w2, &u), names.aux(&u, &v), names.aux(&v, &w2)]);
    let cq2 = Cq::from_parts(q2.name.clone(), Vec::new(), atoms);

    let tgds = deps
        .tgds
        .iter()
        .map(|t| {
            let mut vars = t.body_variables();
            vars.extend(t.head_variables());
            let w = fresh_var("W", &vars);
            Tgd {
                body: t.body.iter().map(|a| names.starred(a, &w)).collect(),
                head: t.head.iter().map(|a| names.starred(a, &w)).collect(),
            }
        })
        .collect();
    Ok((cq, cq2, DependencySet::from_tgds(tgds)))
}

/// The conjunction of two Boolean, connected, variable-disjoint queries.
pub fn conjunction_reduction(q_ac: &Cq, q2: &Cq) -> Result<Cq, ConnectError> {
    for c in [q_ac, q2] {
        if !c.is_boolean() {
            return Err(ConnectError::NotBoolean(c.name.to_string()));
        }
        if !is_connected(c) {
            return Err(ConnectError::Disconnected(c.name.to_string()));
        }
    }
    let shared: Vec<String> = q_ac
        .variables()
        .intersection(&q2.variables())
        .map(|v| v.to_string())
        .collect();
    if !shared.is_empty() {
        return Err(ConnectError::SharedVariables(shared));
    }
    Ok(Cq::from_parts(
        q_ac.name.clone(),
        Vec::new(),
        q_ac.atoms().iter().chain(q2.atoms()).cloned(),
    ))
}
