//! Acceptance run: one line per criterion, non-zero exit if any fails.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use semacyc::acyclicity::{gyo, is_acyclic_cq, is_acyclic_instance, validate_join_tree};
use semacyc::chase::{chase, chase_query, ChasePolicy};
use semacyc::containment::canon::{canonical_key, isomorphic};
use semacyc::containment::{contains_chase, contains_rewrite, equivalent, rewrite_height_bound, ucq_rewrite, Engine, TriState};
use semacyc::eval::{eval_naive, eval_yannakakis, semac_eval, EvalPath};
use semacyc::model::{canonical_database, name};
use semacyc::parser::parse_program;
use semacyc::semacyc::enumerate_acyclic_candidates;
use semacyc::semacyc::{acyclic_approximations, connect, decide_semacyc, SemAcOptions};
use semacyc::{Atom, Cq, DependencySet, Instance, Term, Tgd, Ucq};

use common::*;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn running_example() -> Check {
    let start = Instant::now();
    let p = parse_program(
        "Interest(X,Z), Class(Y,Z) -> Owns(X,Y).\n\
         q(X,Y) :- Interest(X,Z), Class(Y,Z), Owns(X,Y).\n\
         w(X,Y) :- Interest(X,Z), Class(Y,Z).",
    )
    .map_err(|e| e.to_string())?;
    let q = p.cq("q").unwrap();
    let ans = decide_semacyc(&q, &p.deps, &SemAcOptions::default()).map_err(|e| e.to_string())?;
    let w = ans.witness().ok_or_else(|| format!("expected yes, got {}", ans.summary()))?;
    let eq = equivalent(&q, w, &p.deps, Engine::Chase, &ChasePolicy::unbounded()).map_err(|e| e.to_string())?;
    ensure!(eq == TriState::Yes, "witness not equivalent: {eq}");
    ensure!(isomorphic(w, &p.cq("w").unwrap()), "unexpected witness {w:?}");
    within(start, Duration::from_secs(10))?;
    Ok(format!("witness {}", semacyc::parser::serialize_cq(w)))
}

fn clique_chase() -> Check {
    let start = Instant::now();
    let deps = parse_program("P(X), P(Y) -> R(X,Y).").unwrap().deps;
    let inst: Instance = ["c1", "c2", "c3"]
        .iter()
        .map(|c| Atom::new("P", vec![Term::frozen(c)]))
        .collect();
    let res = chase(&inst, &deps, &ChasePolicy::unbounded()).map_err(|e| e.to_string())?;
    ensure!(res.is_saturated(), "status {}", res.status);
    let r = res.instance.iter().filter(|a| a.predicate.as_ref() == "R").count();
    ensure!(r == 9, "{r} R-atoms");
    ensure!(is_acyclic_instance(&res.instance).is_none(), "clique reported acyclic");
    within(start, Duration::from_secs(1))?;
    Ok("9 R-atoms, cyclic".into())
}

fn key_chase() -> Check {
    let start = Instant::now();
    let p = parse_program(
        "key R : 1.\n\
         q :- R(X,Y), S(X,Y,Z), S(X,Z,W), S(X,W,V), R(X,V).\n\
         e :- R(X,Y), S(X,Y,Z), S(X,Z,W), S(X,W,Y).",
    )
    .unwrap();
    let (res, _) = chase_query(&p.cq("q").unwrap(), &p.deps, &ChasePolicy::unbounded()).map_err(|e| e.to_string())?;
    ensure!(res.is_saturated(), "status {}", res.status);
    let got = Cq::from_parts(name("e"), vec![], res.instance.iter().map(|a| a.map_terms(unfreeze)));
    ensure!(isomorphic(&got, &p.cq("e").unwrap()), "chase result {got:?}");
    ensure!(is_acyclic_instance(&res.instance).is_none(), "result reported acyclic");
    within(start, Duration::from_secs(1))?;
    Ok("4 atoms, cyclic".into())
}

const TERNARY: &Sig = &[("R", 2), ("S", 1), ("T", 3)];

fn guarded_chase_prefixes() -> Check {
    let mut rng = StdRng::seed_from_u64(4);
    let (mut prefixes, mut fired) = (0usize, 0);
    for case in 0..200 {
        let q = acyclic_cq(&mut rng, TERNARY, 5, 2);
        let deps = guarded_tgds(&mut rng, TERNARY, 3);
        ensure!(deps.labels().guarded, "generator produced unguarded set");
        let (res, _) = chase_query(&q, &deps, &ChasePolicy::depth(4)).map_err(|e| e.to_string())?;
        let (mut inst, _) = canonical_database(&q);
        ensure!(is_acyclic_instance(&inst).is_some(), "case {case}: query not acyclic");
        fired += usize::from(!res.trigger_log.is_empty());
        for rec in &res.trigger_log {
            for a in &rec.produced {
                inst.insert(a.clone());
            }
            prefixes += 1;
            ensure!(
                is_acyclic_instance(&inst).is_some(),
                "case {case}: cyclic prefix\nq = {q:?}\ndeps = {}",
                semacyc::parser::serialize_deps(&deps)
            );
        }
    }
    Ok(format!("200 cases ({fired} with triggers), {prefixes} prefixes acyclic"))
}

const BINARY: &Sig = &[("R", 2), ("S", 2), ("P", 1)];

fn key_chase_preserves_acyclicity() -> Check {
    let mut rng = StdRng::seed_from_u64(5);
    let mut merged = 0;
    for case in 0..200 {
        let q = acyclic_cq(&mut rng, BINARY, 5, 2);
        let keys = binary_keys(&mut rng, BINARY);
        ensure!(keys.labels().k2_key, "generator produced non-K2 keys");
        let (res, _) = chase_query(&q, &keys, &ChasePolicy::unbounded()).map_err(|e| e.to_string())?;
        ensure!(res.is_saturated(), "case {case}: status {}", res.status);
        merged += usize::from(!res.merges.is_empty());
        ensure!(is_acyclic_instance(&res.instance).is_some(), "case {case}: cyclic result for {q:?}");
    }
    Ok(format!("200 cases, {merged} with merges"))
}

fn doubling_family(n: usize) -> (Cq, DependencySet) {
    let x = |j: usize| Term::var(&format!("X{j}"));
    let (z, o) = (Term::var("Z"), Term::var("O"));
    let tgds = (1..=n)
        .map(|i| {
            let args = |at: &Term| -> Vec<Term> {
                (1..=n)
                    .map(|j| if j == i { at.clone() } else { x(j) })
                    .chain([z.clone(), o.clone()])
                    .collect()
            };
            Tgd {
                body: vec![Atom::new(&format!("P{i}"), args(&z)), Atom::new(&format!("P{i}"), args(&o))],
                head: vec![Atom::new(&format!("P{}", i - 1), args(&z))],
            }
        })
        .collect();
    let zero = Term::constant("0");
    let args = (0..=n).map(|_| zero.clone()).chain([Term::constant("1")]).collect();
    let q = Cq::from_parts(name("q"), vec![], [Atom::new("P0", args)]);
    (q, DependencySet::from_tgds(tgds))
}

fn sticky_rewriting() -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    for n in [2usize, 3] {
        let (q, deps) = doubling_family(n);
        ensure!(deps.labels().sticky, "n={n}: set not sticky");
        let rs = ucq_rewrite(&Ucq::single(q.clone()), &deps, None).map_err(|e| e.to_string())?;
        ensure!(rs.saturated, "n={n}: rewriting not saturated");
        let last = format!("P{n}");
        let only: Vec<&Cq> = rs
            .disjuncts
            .iter()
            .filter(|d| d.atoms().iter().all(|a| a.predicate.as_ref() == last))
            .collect();
        ensure!(only.len() == 1, "n={n}: {} disjuncts over {last} only", only.len());
        ensure!(only[0].len() == 1 << n, "n={n}: {} atoms", only[0].len());
        let bound = rewrite_height_bound(&q, &deps);
        ensure!((rs.height as u128) <= bound, "n={n}: height {} above {bound}", rs.height);
        notes.push(format!("n={n}: {} atoms, height {} <= {bound}", only[0].len(), rs.height));
    }
    within(start, Duration::from_secs(60))?;
    Ok(notes.join("; "))
}

const NR: &Sig = &[("A", 1), ("B", 2), ("C", 3), ("D", 2), ("E", 1)];

fn with_arity(mut q: Cq, k: usize) -> Cq {
    q.free = q.variables().into_iter().take(k).collect();
    q
}

/// A query the chase of `q` is likely to contain: some of its atoms.
fn sub_of_chase(rng: &mut StdRng, q: &Cq, deps: &DependencySet) -> Option<Cq> {
    let (res, tuple) = chase_query(q, deps, &ChasePolicy::unbounded()).ok()?;
    let mut atoms: Vec<Atom> = res.instance.iter().map(|a| a.map_terms(unfreeze)).collect();
    atoms.shuffle(rng);
    atoms.truncate(rng.gen_range(1..=3));
    let free = tuple.iter().map(|t| unfreeze(t).as_var().cloned().unwrap()).collect();
    let c = Cq::from_parts(name("q2"), free, atoms);
    let vars = c.variables();
    c.free.iter().all(|v| vars.contains(v)).then_some(c)
}

fn cross_engine() -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let (mut yes, mut no, mut cases) = (0, 0, 0);
    while cases < 100 {
        let existentials = rng.gen_bool(0.7);
        let deps = nr_tgds(&mut rng, NR, 4, existentials);
        ensure!(deps.labels().non_recursive, "generator produced recursive set");
        let k = rng.gen_range(0..=1);
        let q = with_arity(any_cq(&mut rng, NR, 3, 4, 0), k);
        let q2 = if rng.gen_bool(0.5) {
            match sub_of_chase(&mut rng, &q, &deps) {
                Some(c) => c,
                None => continue,
            }
        } else {
            with_arity(any_cq(&mut rng, NR, 3, 4, 0), k)
        };
        cases += 1;
        let a = contains_chase(&q, &q2, &deps, &ChasePolicy::unbounded()).map_err(|e| e.to_string())?;
        let b = contains_rewrite(&q, &q2, &deps).map_err(|e| e.to_string())?;
        ensure!(a == b, "chase {a} vs rewrite {b}\nq = {q:?}\nq2 = {q2:?}\n{}", semacyc::parser::serialize_deps(&deps));
        match a {
            TriState::Yes => yes += 1,
            TriState::No => no += 1,
            TriState::Unknown(_) => return Err(format!("unknown on a non-recursive set: {a}")),
        }
    }
    Ok(format!("100 cases agree ({yes} yes, {no} no)"))
}

fn yannakakis_vs_naive() -> Check {
    let mut rng = StdRng::seed_from_u64(8);
    let mut answers = 0;
    for case in 0..100 {
        let q = acyclic_cq(&mut rng, TERNARY, 6, 3);
        let db = random_db(&mut rng, TERNARY, 30, 4);
        let tree = is_acyclic_cq(&q).ok_or_else(|| format!("case {case}: generator produced cyclic query"))?;
        let y = eval_yannakakis(&q, &tree, &db).map_err(|e| e.to_string())?;
        let n = eval_naive(&q, &db);
        ensure!(y == n, "case {case}: {} vs {} answers for {q:?}", y.len(), n.len());
        answers += n.len();
    }
    Ok(format!("100 cases agree, {answers} answers total"))
}

fn tuples(consts: &[Term], k: usize) -> Vec<Vec<Term>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t| {
                consts.iter().map(move |c| {
                    let mut t = t.clone();
                    t.push(c.clone());
                    t
                })
            })
            .collect();
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Family {
    Guarded,
    NonRecursive,
    Keys,
}

fn game_case(rng: &mut StdRng, family: Family) -> Result<Option<(usize, usize, EvalPath)>, String> {
    let (sig, deps) = match family {
        Family::Guarded => (TERNARY, guarded_tgds(rng, TERNARY, 3)),
        Family::NonRecursive => {
            let existentials = rng.gen_bool(0.5);
            (NR, nr_tgds(rng, NR, 3, existentials))
        }
        Family::Keys => (BINARY, binary_keys(rng, BINARY)),
    };
    // Sets that are also guarded take the game-on-query path.
    if deps.is_empty() || (family == Family::NonRecursive && deps.labels().guarded) {
        return Ok(None);
    }
    let base = acyclic_cq(rng, sig, 4, 2);
    let Some(q) = padded_with_chase(rng, &base, &deps, 2) else {
        return Ok(None);
    };
    let raw = match family {
        Family::Keys => keyed_db(rng, sig, &deps, 14, 4),
        _ => random_db(rng, sig, 10, 3),
    };
    let Some(db) = repair(&raw, &deps, 6) else {
        return Ok(None);
    };
    let consts: Vec<Term> = db.terms().into_iter().filter(Term::is_rigid).collect();
    let naive = eval_naive(&q, &db);
    let (mut checked, mut hits, mut path) = (0, 0, EvalPath::Witness);
    for t in tuples(&consts, q.free.len()) {
        let (got, p) = semac_eval(&q, &deps, &db, &t, &SemAcOptions::default()).map_err(|e| e.to_string())?;
        let want = naive.contains(&t);
        ensure!(
            got == want,
            "{family:?}: game says {got}, naive says {want} for {t:?}\nq = {q:?}\n{}\ndb = {}",
            semacyc::parser::serialize_deps(&deps),
            semacyc::parser::serialize_instance(&db)
        );
        checked += 1;
        hits += usize::from(want);
        path = p;
    }
    Ok((checked > 0).then_some((checked, hits, path)))
}

fn games_agree_with_naive() -> Check {
    let mut rng = StdRng::seed_from_u64(9);
    let mut notes = Vec::new();
    for (family, expect) in [
        (Family::Guarded, EvalPath::GameOnQuery),
        (Family::NonRecursive, EvalPath::GameOnChase),
        (Family::Keys, EvalPath::GameOnChase),
    ] {
        let (mut cases, mut tested, mut hits, mut tries) = (0, 0, 0, 0);
        while cases < 60 {
            tries += 1;
            ensure!(tries < 10_000, "{family:?}: generator starved after {cases} cases");
            if let Some((n, h, path)) = game_case(&mut rng, family)? {
                ensure!(path == expect, "{family:?}: took {path:?}");
                cases += 1;
                tested += n;
                hits += h;
            }
        }
        notes.push(format!("{family:?} {cases} cases/{tested} tuples/{hits} answers"));
    }
    Ok(notes.join("; "))
}

/// Three edges on three variables with random orientations, plus an
/// optional extra edge.
fn oriented_triangle(rng: &mut StdRng) -> Cq {
    let v = ["X", "Y", "Z", "W"].map(Term::var);
    let mut atoms: Vec<Atom> = [(0, 1), (1, 2), (0, 2)]
        .iter()
        .map(|&(a, b)| {
            let (a, b) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            Atom::new("R", vec![v[a].clone(), v[b].clone()])
        })
        .collect();
    if rng.gen_bool(0.5) {
        atoms.push(Atom::new("R", vec![v[rng.gen_range(0..3)].clone(), v[rng.gen_range(0..4)].clone()]));
    }
    let free = if rng.gen_bool(0.5) { vec![name("X")] } else { vec![] };
    Cq::from_parts(name("q"), free, atoms)
}

fn empty_set_fast_path() -> Check {
    let mut rng = StdRng::seed_from_u64(10);
    let mixed: &Sig = &[("R", 2), ("S", 1)];
    let edges: &Sig = &[("R", 2)];
    let mut yes = 0;
    for case in 0..100 {
        let q = match case % 3 {
            0 => any_cq(&mut rng, mixed, 4, 3, 2),
            1 => any_cq(&mut rng, edges, 4, 3, 2),
            _ => oriented_triangle(&mut rng),
        };
        let got = decide_semacyc(&q, &DependencySet::empty(), &SemAcOptions::default())
            .map_err(|e| e.to_string())?
            .verdict();
        let core = brute_force_core(&q);
        let want = TriState::from_bool(brute_force_acyclic(core.atoms()));
        ensure!(got == want, "case {case}: {got} vs oracle {want} for {q:?}");
        yes += usize::from(want == TriState::Yes);
    }
    let tri = parse_program("t :- R(X,Y), R(Y,Z), R(Z,X).").unwrap().cq("t").unwrap();
    let v = decide_semacyc(&tri, &DependencySet::empty(), &SemAcOptions::default())
        .map_err(|e| e.to_string())?
        .verdict();
    ensure!(v == TriState::No, "triangle: {v}");
    Ok(format!("100 cases agree ({yes} yes); triangle no"))
}

fn connecting_operator() -> Check {
    let mut rng = StdRng::seed_from_u64(11);
    let (mut yes, mut acyclic) = (0, 0);
    for case in 0..30 {
        let deps = nr_tgds(&mut rng, NR, 3, true);
        let q = if rng.gen_bool(0.5) {
            with_arity(acyclic_cq(&mut rng, NR, 3, 0), 0)
        } else {
            connected_boolean_cq(&mut rng, NR, 3, 3)
        };
        let q2 = match sub_of_chase(&mut rng, &q, &deps) {
            Some(c) if rng.gen_bool(0.6) => c,
            _ => connected_boolean_cq(&mut rng, NR, 2, 3),
        };
        let (cq, cq2, cd) = connect(&q, &q2, &deps).map_err(|e| e.to_string())?;
        let before = contains_chase(&q, &q2, &deps, &ChasePolicy::unbounded()).map_err(|e| e.to_string())?;
        let after = contains_chase(&cq, &cq2, &cd, &ChasePolicy::unbounded()).map_err(|e| e.to_string())?;
        ensure!(before == after, "case {case}: {before} before, {after} after\nq = {q:?}\nq2 = {q2:?}");
        yes += usize::from(before == TriState::Yes);
        if is_acyclic_cq(&q).is_some() {
            acyclic += 1;
            ensure!(is_acyclic_cq(&cq).is_some(), "case {case}: connecting broke acyclicity");
        }
    }
    Ok(format!("30 cases ({yes} contained, {acyclic} acyclic) preserved"))
}

fn all_small_queries() -> Vec<Cq> {
    let sig = [("R", 2usize), ("T", 3usize)];
    let mut level: Vec<Cq> = vec![Cq::from_parts(name("q"), vec![], [])];
    let mut all = Vec::new();
    for _ in 0..4 {
        let mut next: HashSet<Cq> = HashSet::new();
        for p in &level {
            let vars: Vec<Term> = p.variables().into_iter().map(Term::Var).collect();
            for (pred, a) in sig {
                let mut pool = vars.clone();
                pool.extend((0..a).map(|j| Term::var(&format!("_n{j}"))));
                let mut idx = vec![0usize; a];
                loop {
                    // Fresh variables must be introduced in order.
                    let fresh: Vec<usize> = idx.iter().filter(|&&i| i >= vars.len()).map(|&i| i - vars.len()).collect();
                    let ordered = fresh.iter().enumerate().all(|(k, &f)| f <= fresh[..k].iter().max().map_or(0, |m| m + 1));
                    if ordered {
                        let atom = Atom::new(pred, idx.iter().map(|&i| pool[i].clone()).collect());
                        if !p.atoms().contains(&atom) {
                            let c = Cq::from_parts(name("q"), vec![], p.atoms().iter().cloned().chain([atom]));
                            next.insert(canonical_key(&c));
                        }
                    }
                    let mut k = 0;
                    while k < a {
                        idx[k] += 1;
                        if idx[k] < pool.len() {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                    if k == a {
                        break;
                    }
                }
            }
        }
        level = next.into_iter().collect();
        all.extend(level.iter().cloned());
    }
    all
}

fn gyo_oracle() -> Check {
    let all = all_small_queries();
    let mut acyclic = 0;
    for q in &all {
        let want = brute_force_acyclic(q.atoms());
        let got = gyo(q.atoms());
        ensure!(got.is_some() == want, "gyo {} vs oracle {want} on {q:?}", got.is_some());
        if let Some(t) = got {
            ensure!(validate_join_tree(q.atoms(), &t), "invalid join tree for {q:?}");
            acyclic += 1;
        }
    }
    Ok(format!("{} queries up to isomorphism, {acyclic} acyclic", all.len()))
}

fn approximations() -> Check {
    let p = parse_program("t :- R(X,Y), R(Y,Z), R(Z,X).\nl :- R(X,X).").unwrap();
    let tri = p.cq("t").unwrap();
    let policy = ChasePolicy::unbounded();
    let none = DependencySet::empty();
    let ap = acyclic_approximations(&tri, &none).map_err(|e| e.to_string())?;
    ensure!(!ap.maximal.is_empty(), "no approximation");
    let within_tri = |c: &Cq| contains_chase(c, &tri, &none, &policy).map(|t| t == TriState::Yes);
    let mut pool: Vec<Cq> = ap.candidates.clone();
    pool.extend(enumerate_acyclic_candidates(&tri.predicates(), &[], &BTreeSet::new(), 3, None));
    for m in &ap.maximal {
        ensure!(brute_force_acyclic(m.atoms()), "{m:?} is cyclic");
        ensure!(within_tri(m).map_err(|e| e.to_string())?, "{m:?} not contained in the triangle");
        for c in &pool {
            if !within_tri(c).map_err(|e| e.to_string())? {
                continue;
            }
            let up = contains_chase(m, c, &none, &policy).map_err(|e| e.to_string())?;
            let down = contains_chase(c, m, &none, &policy).map_err(|e| e.to_string())?;
            ensure!(!(up == TriState::Yes && down == TriState::No), "{c:?} strictly above {m:?}");
        }
    }
    ensure!(within_tri(&p.cq("l").unwrap()).map_err(|e| e.to_string())?, "loop not contained");
    Ok(format!(
        "{} maximal, {} candidates compared: {}",
        ap.maximal.len(),
        pool.len(),
        ap.maximal.iter().map(semacyc::parser::serialize_cq).collect::<Vec<_>>().join(" | ")
    ))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("running example end to end", running_example),
        ("clique chase", clique_chase),
        ("key chase example", key_chase),
        ("guarded chase prefixes stay acyclic", guarded_chase_prefixes),
        ("binary key chase stays acyclic", key_chase_preserves_acyclicity),
        ("sticky rewriting doubles", sticky_rewriting),
        ("chase and rewriting containment agree", cross_engine),
        ("yannakakis matches naive", yannakakis_vs_naive),
        ("game evaluation matches naive", games_agree_with_naive),
        ("empty dependency set fast path", empty_set_fast_path),
        ("connecting operator law", connecting_operator),
        ("gyo matches brute force", gyo_oracle),
        ("acyclic approximations", approximations),
    ];
    let mut failed = 0;
    for (i, (label, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {label} ({took:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {label} ({took:.2}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
