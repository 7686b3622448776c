use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use semacyc::acyclicity::is_acyclic_cq;
use semacyc::chase::{chase, chase_query, ChasePolicy, ChaseStatus, Variant};
use semacyc::classify::sticky_marking;
use semacyc::containment::{contains, core, ucq_rewrite, Engine, TriState};
use semacyc::eval::{eval_naive_ucq, eval_yannakakis, game_equiv, semac_eval, Tuple};
use semacyc::model::canonical_database;
use semacyc::parser::{
    parse_program, serialize_cq, serialize_deps, serialize_instance, serialize_ucq, Program,
};
use semacyc::semacyc::{
    acyclic_approximations, connect, decide_semacyc, decide_semacyc_ucq, SemAcError, SemAcOptions,
};
use semacyc::{Cq, DependencySet, Instance, Term, Ucq};

const EXIT_USAGE: u8 = 64;
const EXIT_INTERNAL: u8 = 70;

#[derive(Parser)]
#[command(name = "semacyc", version, about = "Conjunctive queries under tgds and egds: chase, containment, semantic acyclicity")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Print a single JSON object instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Map the answer to the exit code: yes 0, no 1, unknown 2.
    #[arg(long, global = true)]
    exit_status: bool,

    /// Report the elapsed time on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the dependency set.
    Classify(Input),
    /// Test a query for acyclicity and print a join tree.
    Acyclic(QueryInput),
    /// Compute the core of a query.
    Core(QueryInput),
    /// Chase a query's canonical database, or the facts when no query is given.
    Chase {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        query: Option<String>,
        #[command(flatten)]
        budget: Budget,
    },
    /// Decide containment of the first query in the second.
    Contain {
        #[command(flatten)]
        input: Input,
        /// Two query names: the contained one, then the containing one.
        #[arg(long, num_args = 1, required = true)]
        query: Vec<String>,
        #[arg(long, value_enum, default_value_t = EngineArg::Auto)]
        engine: EngineArg,
        #[command(flatten)]
        budget: Budget,
    },
    /// UCQ rewriting under non-recursive or sticky tgds.
    Rewrite {
        #[command(flatten)]
        q: QueryInput,
        /// Drop rewritings with more atoms than this.
        #[arg(long)]
        max_size: Option<usize>,
    },
    /// Decide semantic acyclicity.
    Semacyc {
        #[command(flatten)]
        q: QueryInput,
        #[command(flatten)]
        search: Search,
        #[command(flatten)]
        budget: Budget,
    },
    /// Compute acyclic approximations.
    Approx(QueryInput),
    /// Apply the connecting operator to two Boolean queries and the tgds.
    Connect {
        #[command(flatten)]
        input: Input,
        #[arg(long, num_args = 1, required = true)]
        query: Vec<String>,
    },
    /// Evaluate a query over a database.
    Eval {
        #[command(flatten)]
        q: QueryInput,
        /// File with the database facts (defaults to the input file).
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Algo::Auto)]
        algo: Algo,
        /// Comma-separated constants; test membership of this tuple.
        #[arg(long)]
        tuple: Option<String>,
        #[command(flatten)]
        search: Search,
        #[command(flatten)]
        budget: Budget,
    },
}

#[derive(Args)]
struct Input {
    /// Program file with queries, dependencies and facts.
    file: PathBuf,
    /// Take the dependencies from this file instead.
    #[arg(long)]
    deps: Option<PathBuf>,
}

#[derive(Args)]
struct QueryInput {
    #[command(flatten)]
    input: Input,
    /// Query name (optional when the file defines exactly one).
    #[arg(long)]
    query: Option<String>,
}

#[derive(Args, Default)]
struct Budget {
    /// Chase variant (default restricted).
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Stop the chase after this many tgd applications.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Stop the chase at this atom depth.
    #[arg(long)]
    max_depth: Option<usize>,
}

impl Budget {
    fn given(&self) -> bool {
        self.variant.is_some() || self.max_steps.is_some() || self.max_depth.is_some()
    }

    fn policy(&self) -> ChasePolicy {
        ChasePolicy {
            variant: match self.variant {
                Some(VariantArg::Oblivious) => Variant::Oblivious,
                _ => Variant::Restricted,
            },
            max_steps: self.max_steps,
            max_depth: self.max_depth,
        }
    }
}

#[derive(Args)]
struct Search {
    /// Largest witness size to try.
    #[arg(long)]
    bound: Option<usize>,
    /// Search up to the full class bound.
    #[arg(long)]
    exact_bound: bool,
    /// Run a bounded search for classes without a decision procedure.
    #[arg(long)]
    force_bound: bool,
    /// Disable hom-from-query pruning.
    #[arg(long)]
    no_prune: bool,
}

impl Search {
    fn options(&self, budget: &Budget) -> SemAcOptions {
        SemAcOptions {
            bound: self.bound,
            exact_bound: self.exact_bound,
            force: self.force_bound,
            prune: self.no_prune.then_some(false),
            policy: budget.given().then(|| budget.policy()),
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Restricted,
    Oblivious,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Chase,
    Rewrite,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Naive,
    Yannakakis,
    Game,
    Auto,
}

/// Errors split by exit code.
enum Failure {
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn semac_failure(e: SemAcError) -> Failure {
    match e {
        SemAcError::Verification(_) => Failure::Internal(e.into()),
        other => Failure::Usage(other.into()),
    }
}

/// Result of one verb: the logical answer (if the verb has one), the text
/// rendering, and the JSON object.
struct Outcome {
    answer: Option<TriState>,
    text: String,
    json: Value,
}

fn envelope(answer: &str, witness: Value, certificate: Value, diagnostics: Value) -> Value {
    json!({
        "answer": answer,
        "witness": witness,
        "certificate": certificate,
        "diagnostics": diagnostics,
    })
}

fn load(path: &Path) -> anyhow::Result<Program> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_program(&text).map_err(|e| anyhow!("{}:{e}", path.display()))
}

struct Loaded {
    program: Program,
    deps: DependencySet,
}

fn load_input(input: &Input) -> anyhow::Result<Loaded> {
    let program = load(&input.file)?;
    let deps = match &input.deps {
        Some(p) if p != &input.file => load(p)?.deps,
        _ => program.deps.clone(),
    };
    Ok(Loaded { program, deps })
}

fn pick_ucq(program: &Program, name: Option<&str>) -> anyhow::Result<Ucq> {
    match name {
        Some(n) => program.query(n).cloned().ok_or_else(|| anyhow!("no query named `{n}`")),
        None => match program.queries.as_slice() {
            [only] => Ok(only.clone()),
            [] => bail!("the input defines no query"),
            _ => bail!("several queries defined; choose one with --query"),
        },
    }
}

fn pick_cq(program: &Program, name: Option<&str>) -> anyhow::Result<Cq> {
    let u = pick_ucq(program, name)?;
    match <[Cq; 1]>::try_from(u.disjuncts) {
        Ok([cq]) => Ok(cq),
        Err(_) => bail!("query `{}` is a union; this command needs a single conjunctive query", u.name),
    }
}

fn parse_tuple(s: &str) -> Tuple {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(|c| Term::constant(c.trim().trim_matches('"'))).collect()
}

fn tri_text(t: TriState) -> String {
    t.to_string()
}

fn run_classify(input: &Input) -> Result<Outcome, Failure> {
    let Loaded { deps, .. } = load_input(input)?;
    let labels = deps.labels();
    let flags: Vec<&str> = labels.flags().into_iter().filter(|(_, on)| *on).map(|(n, _)| n).collect();
    let mut text = format!("kind: {:?}\n", labels.kind).to_lowercase();
    let _ = writeln!(text, "classes: {}", flags.join(" "));
    let marking = sticky_marking(&deps.tgds);
    let marked: Vec<String> = marking.marked.iter().map(|(t, v)| format!("{t}:{v}")).collect();
    if !deps.tgds.is_empty() {
        let _ = writeln!(text, "marked variables: {}", if marked.is_empty() { "none".into() } else { marked.join(" ") });
    }
    let diag = json!({
        "kind": format!("{:?}", labels.kind).to_lowercase(),
        "flags": labels.flags().into_iter().map(|(n, on)| (n.to_string(), json!(on))).collect::<serde_json::Map<_, _>>(),
        "marked": marked,
    });
    Ok(Outcome {
        answer: None,
        text,
        json: envelope(&flags.join(" "), Value::Null, Value::Null, diag),
    })
}

fn run_acyclic(q: &QueryInput) -> Result<Outcome, Failure> {
    let Loaded { program, .. } = load_input(&q.input)?;
    let cq = pick_cq(&program, q.query.as_deref())?;
    Ok(match is_acyclic_cq(&cq) {
        Some(tree) => Outcome {
            answer: Some(TriState::Yes),
            text: format!("yes\n{}", tree.outline()),
            json: envelope("yes", tree.to_json(), Value::Null, json!({ "atoms": cq.len() })),
        },
        None => Outcome {
            answer: Some(TriState::No),
            text: "no\n".into(),
            json: envelope("no", Value::Null, Value::Null, json!({ "atoms": cq.len() })),
        },
    })
}

fn run_core(q: &QueryInput) -> Result<Outcome, Failure> {
    let Loaded { program, .. } = load_input(&q.input)?;
    let cq = pick_cq(&program, q.query.as_deref())?;
    let c = core(&cq);
    let acyclic = is_acyclic_cq(&c).is_some();
    let s = serialize_cq(&c);
    Ok(Outcome {
        answer: None,
        text: format!("{s}\n"),
        json: envelope(
            "ok",
            json!(s),
            Value::Null,
            json!({ "atoms": c.len(), "removed": cq.len() - c.len(), "acyclic": acyclic }),
        ),
    })
}

fn status_answer(s: ChaseStatus) -> TriState {
    match s {
        ChaseStatus::Saturated => TriState::Yes,
        ChaseStatus::Failed => TriState::No,
        ChaseStatus::BudgetExhausted => TriState::Unknown(semacyc::containment::UnknownReason::Budget),
    }
}

fn run_chase(input: &Input, query: Option<&str>, budget: &Budget) -> Result<Outcome, Failure> {
    let Loaded { program, deps } = load_input(input)?;
    let policy = budget.policy();
    let (res, tuple) = match query {
        Some(n) => {
            let cq = pick_cq(&program, Some(n))?;
            let (res, tuple) = chase_query(&cq, &deps, &policy).map_err(|e| Failure::Usage(e.into()))?;
            (res, Some(tuple))
        }
        None => (chase(&program.facts, &deps, &policy).map_err(|e| Failure::Usage(e.into()))?, None),
    };
    let mut text = format!("% status: {}\n% steps: {}\n", res.status, res.steps);
    let _ = writeln!(text, "% depth: {}", res.max_depth());
    if let Some(t) = &tuple {
        let shown: Vec<String> = t.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(text, "% answer tuple: ({})", shown.join(","));
    }
    text.push_str(&serialize_instance(&res.instance));
    let diag = json!({
        "status": res.status.to_string(),
        "steps": res.steps,
        "depth": res.max_depth(),
        "atoms": res.instance.len(),
        "tuple": tuple.map(|t| t.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
    });
    Ok(Outcome {
        answer: Some(status_answer(res.status)),
        text,
        json: envelope(&res.status.to_string(), json!(serialize_instance(&res.instance)), Value::Null, diag),
    })
}

fn run_contain(input: &Input, names: &[String], engine: EngineArg, budget: &Budget) -> Result<Outcome, Failure> {
    let [a, b] = names else {
        return Err(Failure::Usage(anyhow!("contain needs exactly two --query options")));
    };
    let Loaded { program, deps } = load_input(input)?;
    let (qa, qb) = (pick_cq(&program, Some(a))?, pick_cq(&program, Some(b))?);
    let engine = match engine {
        EngineArg::Chase => Engine::Chase,
        EngineArg::Rewrite => Engine::Rewrite,
        EngineArg::Auto => Engine::Auto,
    };
    let mut policy = budget.policy();
    if !budget.given() && !deps.labels().terminating_chase {
        policy = ChasePolicy::depth(semacyc::semacyc::DEFAULT_CHASE_DEPTH);
    }
    let ans = contains(&qa, &qb, &deps, engine, &policy).map_err(|e| Failure::Usage(e.into()))?;
    Ok(Outcome {
        answer: Some(ans),
        text: format!("{}\n", tri_text(ans)),
        json: envelope(&ans.to_string(), Value::Null, Value::Null, json!({ "contained": a, "container": b })),
    })
}

fn run_rewrite(q: &QueryInput, max_size: Option<usize>) -> Result<Outcome, Failure> {
    let Loaded { program, deps } = load_input(&q.input)?;
    let u = pick_ucq(&program, q.query.as_deref())?;
    let rs = ucq_rewrite(&u, &deps, max_size).map_err(|e| Failure::Usage(e.into()))?;
    let ucq = rs.to_ucq(&u.name);
    let s = serialize_ucq(&ucq);
    let answer = if rs.saturated {
        TriState::Yes
    } else {
        TriState::Unknown(semacyc::containment::UnknownReason::Budget)
    };
    Ok(Outcome {
        answer: Some(answer),
        text: format!(
            "% saturated: {}\n% disjuncts: {}\n% height: {}\n{s}",
            rs.saturated,
            rs.disjuncts.len(),
            rs.height
        ),
        json: envelope(
            if rs.saturated { "saturated" } else { "truncated" },
            json!(s),
            Value::Null,
            json!({ "disjuncts": rs.disjuncts.len(), "height": rs.height, "saturated": rs.saturated }),
        ),
    })
}

fn run_semacyc(q: &QueryInput, search: &Search, budget: &Budget) -> Result<Outcome, Failure> {
    let Loaded { program, deps } = load_input(&q.input)?;
    let u = pick_ucq(&program, q.query.as_deref())?;
    let opts = search.options(budget);
    if u.disjuncts.len() > 1 {
        let ans = decide_semacyc_ucq(&u, &deps, &opts).map_err(semac_failure)?;
        let mut text = format!("{}\n", ans.verdict);
        if let Some(w) = &ans.witness {
            text.push_str(&serialize_ucq(w));
        }
        return Ok(Outcome {
            answer: Some(ans.verdict),
            text,
            json: ans.to_json(),
        });
    }
    let cq = pick_cq(&program, q.query.as_deref())?;
    let ans = decide_semacyc(&cq, &deps, &opts).map_err(semac_failure)?;
    let report = ans.report();
    let mut text = format!("{}\n", ans.summary());
    if let Some(w) = ans.witness() {
        let _ = writeln!(text, "witness: {}", serialize_cq(w));
    }
    if let Some(b) = &report.bound {
        let _ = writeln!(text, "class: {} (bound {})", b.class_used, b.b);
    }
    let _ = writeln!(
        text,
        "searched up to {} atoms, {} candidates checked",
        report.searched_up_to, report.candidates_checked
    );
    for n in &report.notes {
        let _ = writeln!(text, "note: {n}");
    }
    Ok(Outcome {
        answer: Some(ans.verdict()),
        text,
        json: ans.to_json(),
    })
}

fn run_approx(q: &QueryInput) -> Result<Outcome, Failure> {
    let Loaded { program, deps } = load_input(&q.input)?;
    let cq = pick_cq(&program, q.query.as_deref())?;
    let ap = acyclic_approximations(&cq, &deps).map_err(semac_failure)?;
    let shown: Vec<String> = ap.maximal.iter().map(serialize_cq).collect();
    let mut text = String::new();
    for s in &shown {
        let _ = writeln!(text, "{s}");
    }
    Ok(Outcome {
        answer: Some(TriState::from_bool(!ap.maximal.is_empty())),
        text,
        json: envelope(
            "yes",
            json!(shown),
            Value::Null,
            json!({ "candidates": ap.candidates.len(), "seed": serialize_cq(&ap.seed) }),
        ),
    })
}

fn run_connect(input: &Input, names: &[String]) -> Result<Outcome, Failure> {
    let [a, b] = names else {
        return Err(Failure::Usage(anyhow!("connect needs exactly two --query options")));
    };
    let Loaded { program, deps } = load_input(input)?;
    let (qa, qb) = (pick_cq(&program, Some(a))?, pick_cq(&program, Some(b))?);
    let (ca, cb, cd) = connect(&qa, &qb, &deps).map_err(|e| Failure::Usage(e.into()))?;
    let text = format!("{}\n{}\n{}", serialize_cq(&ca), serialize_cq(&cb), serialize_deps(&cd));
    Ok(Outcome {
        answer: None,
        text,
        json: envelope(
            "ok",
            json!({
                "query": serialize_cq(&ca),
                "query2": serialize_cq(&cb),
                "dependencies": serialize_deps(&cd),
            }),
            Value::Null,
            json!({}),
        ),
    })
}

fn active_domain_tuples(db: &Instance, arity: usize) -> Vec<Tuple> {
    let dom: Vec<Term> = db.terms().into_iter().collect();
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|t: Tuple| {
                dom.iter().map(move |d| {
                    let mut t = t.clone();
                    t.push(d.clone());
                    t
                })
            })
            .collect();
    }
    out
}

fn run_eval(
    q: &QueryInput,
    db_path: Option<&Path>,
    algo: Algo,
    tuple: Option<&str>,
    search: &Search,
    budget: &Budget,
) -> Result<Outcome, Failure> {
    let Loaded { program, deps } = load_input(&q.input)?;
    let db = match db_path {
        Some(p) => load(p)?.facts,
        None => program.facts.clone(),
    };
    let u = pick_ucq(&program, q.query.as_deref())?;
    let tuple = tuple.map(parse_tuple).or_else(|| (u.arity() == 0).then(Vec::new));
    if let Some(t) = &tuple {
        if t.len() != u.arity() {
            return Err(Failure::Usage(anyhow!(
                "tuple has {} values but the query has {} answer variables",
                t.len(),
                u.arity()
            )));
        }
    }
    let answers: BTreeSet<Tuple> = match algo {
        Algo::Naive => eval_naive_ucq(&u, &db),
        Algo::Yannakakis => {
            let cq = pick_cq(&program, q.query.as_deref())?;
            let tree = is_acyclic_cq(&cq).ok_or_else(|| anyhow!("yannakakis needs an acyclic query"))?;
            eval_yannakakis(&cq, &tree, &db).map_err(|e| Failure::Usage(e.into()))?
        }
        Algo::Game | Algo::Auto => {
            let cq = pick_cq(&program, q.query.as_deref())?;
            let candidates = match &tuple {
                Some(t) => vec![t.clone()],
                None => active_domain_tuples(&db, cq.free.len()),
            };
            let opts = search.options(budget);
            let mut out = BTreeSet::new();
            for t in candidates {
                let hit = match algo {
                    Algo::Game => {
                        let (left, lt) = canonical_database(&cq);
                        game_equiv(&left, &lt, &db, &t).0
                    }
                    _ => semac_eval(&cq, &deps, &db, &t, &opts).map_err(|e| Failure::Usage(e.into()))?.0,
                };
                if hit {
                    out.insert(t);
                }
            }
            out
        }
    };
    let shown: Vec<String> = answers
        .iter()
        .map(|t| format!("({})", t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
        .collect();
    Ok(match tuple {
        Some(t) => {
            let ans = TriState::from_bool(answers.contains(&t));
            Outcome {
                answer: Some(ans),
                text: format!("{ans}\n"),
                json: envelope(&ans.to_string(), Value::Null, Value::Null, json!({ "facts": db.len() })),
            }
        }
        None => {
            let mut text = String::new();
            for s in &shown {
                let _ = writeln!(text, "{s}");
            }
            Outcome {
                answer: Some(TriState::from_bool(!answers.is_empty())),
                text,
                json: envelope(
                    if answers.is_empty() { "no" } else { "yes" },
                    json!(shown),
                    Value::Null,
                    json!({ "facts": db.len(), "answers": answers.len() }),
                ),
            }
        }
    })
}

fn dispatch(cmd: &Command) -> Result<Outcome, Failure> {
    match cmd {
        Command::Classify(input) => run_classify(input),
        Command::Acyclic(q) => run_acyclic(q),
        Command::Core(q) => run_core(q),
        Command::Chase { input, query, budget } => run_chase(input, query.as_deref(), budget),
        Command::Contain {
            input,
            query,
            engine,
            budget,
        } => run_contain(input, query, *engine, budget),
        Command::Rewrite { q, max_size } => run_rewrite(q, *max_size),
        Command::Semacyc { q, search, budget } => run_semacyc(q, search, budget),
        Command::Approx(q) => run_approx(q),
        Command::Connect { input, query } => run_connect(input, query),
        Command::Eval {
            q,
            db,
            algo,
            tuple,
            search,
            budget,
        } => run_eval(q, db.as_deref(), *algo, tuple.as_deref(), search, budget),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let start = Instant::now();
    let outcome = dispatch(&cli.command);
    if cli.verbose {
        eprintln!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    }
    match outcome {
        Ok(o) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&o.json).expect("json values serialize"));
            } else {
                print!("{}", o.text);
                if !o.text.is_empty() && !o.text.ends_with('\n') {
                    println!();
                }
            }
            match (cli.exit_status, o.answer) {
                (true, Some(TriState::No)) => ExitCode::from(1),
                (true, Some(TriState::Unknown(_))) => ExitCode::from(2),
                _ => ExitCode::SUCCESS,
            }
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
