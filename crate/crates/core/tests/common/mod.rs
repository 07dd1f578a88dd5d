//! Shared generators and checks for the integration suites and the
//! acceptance runner.

#![allow(dead_code)]

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use cr_core::guard::{GuardSpec, Param};
use cr_core::reference::{Oracle, OracleStop};
use cr_core::solvers::{interval_fixpoint_bounds, order_interval};
use cr_core::{
    Event, EventKind, Fact, Handler, HandlerBuilder, ListenerContext, ListenerError, Pattern, Program, RunOutcome,
    Status, Symbol, TypeTag, Value,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NONE: [Value; 0] = [];

/// Dequeue budget per differential run.
pub const BUDGET: usize = 10_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Random programs
// ---------------------------------------------------------------------------

pub struct Sample {
    pub seed: u64,
    pub program: Arc<Program>,
    pub tells: Vec<Fact>,
}

struct Shape {
    name: String,
    key: usize,
    data: usize,
}

const VARS: [&str; 4] = ["X", "Y", "Z", "W"];

fn guards(h: &mut HandlerBuilder) {
    h.guard(GuardSpec::new("less", [Param::int(), Param::int()]), |g| Ok(g.int(0)? < g.int(1)?));
    h.guard(GuardSpec::new("even", [Param::int()]), |g| Ok(g.int(0)? % 2 == 0));
    h.guard(GuardSpec::new("sum", [Param::int(), Param::int(), Param::Out]).void(), |g| {
        let s = (g.int(0)? + g.int(1)?).rem_euclid(4);
        g.set(2, s)?;
        Ok(true)
    });
    // forces an exit whenever it sees 3
    h.guard(GuardSpec::new("stop", [Param::int()]), |g| {
        if g.int(0)? == 3 {
            g.force_exit();
        }
        Ok(true)
    });
}

fn small(rng: &mut ChaCha8Rng) -> i64 {
    rng.gen_range(0..4)
}

fn head_patterns(rng: &mut ChaCha8Rng, vars: &[Symbol], any: Symbol, n: usize, bound: &mut Vec<Symbol>) -> Vec<Pattern> {
    (0..n)
        .map(|_| match rng.gen_range(0..20) {
            0..=11 => {
                let s = vars[rng.gen_range(0..vars.len())];
                if !bound.contains(&s) {
                    bound.push(s);
                }
                Pattern::from(s)
            }
            12..=14 => Pattern::from(any),
            _ => Pattern::from(small(rng)),
        })
        .collect()
}

fn term(rng: &mut ChaCha8Rng, bound: &[Symbol]) -> Pattern {
    if !bound.is_empty() && rng.gen_bool(0.75) {
        Pattern::from(bound[rng.gen_range(0..bound.len())])
    } else {
        Pattern::from(small(rng))
    }
}

struct HeadPlan {
    c: usize,
    key: Vec<Pattern>,
    data: Vec<Pattern>,
    passive: bool,
    keep: bool,
}

/// Builds one random handler with at most 4 constraints, 4 rules and
/// 3 heads per rule. Returns `None` when the draw does not compile.
fn random_program(rng: &mut ChaCha8Rng) -> Option<Program> {
    let mut h = HandlerBuilder::new("random");
    guards(&mut h);
    let shapes: Vec<Shape> = (0..rng.gen_range(1..=4))
        .map(|i| Shape { name: format!("c{i}"), key: rng.gen_range(0..=2), data: rng.gen_range(0..=1) })
        .collect();
    let cs: Vec<Symbol> = shapes.iter().map(|s| h.symbol(&s.name)).collect();
    for (c, s) in cs.iter().zip(&shapes) {
        let decl = h.constraint(*c, vec![TypeTag::Int; s.key]);
        if s.data > 0 {
            drop(decl.with(vec![TypeTag::Int; s.data]));
        }
    }
    let vars = h.symbols(VARS);
    let out = h.symbol("S");
    let any = h.wildcard();
    let fail = h.fail();

    for _ in 0..rng.gen_range(1..=4) {
        let mut bound = Vec::new();
        let heads: Vec<HeadPlan> = (0..rng.gen_range(1..=3))
            .map(|_| {
                let c = rng.gen_range(0..cs.len());
                let key = head_patterns(rng, &vars, any, shapes[c].key, &mut bound);
                let data = head_patterns(rng, &vars, any, shapes[c].data, &mut bound);
                HeadPlan { c, key, data, passive: rng.gen_bool(0.25), keep: rng.gen_bool(0.4) }
            })
            .collect();

        let mut b = h.when(cs[heads[0].c], heads[0].key.clone());
        for (i, hp) in heads.iter().enumerate() {
            if i > 0 {
                b = b.and(cs[hp.c], hp.key.clone());
            }
            if !hp.data.is_empty() {
                b = b.with(hp.data.clone());
            }
            if hp.passive {
                b = b.passive();
            }
            if hp.keep {
                b = b.keep();
            }
        }

        let mut summed = false;
        for _ in 0..rng.gen_range(0..=2) {
            let neg = if rng.gen_bool(0.3) { "!" } else { "" };
            b = match rng.gen_range(0..4) {
                0 => b.guard(&format!("{neg}less"), vec![term(rng, &bound), term(rng, &bound)]),
                1 => b.guard(&format!("{neg}even"), vec![term(rng, &bound)]),
                2 if !summed => {
                    summed = true;
                    let args = vec![term(rng, &bound), term(rng, &bound), Pattern::from(out)];
                    bound.push(out);
                    b.guard("sum", args)
                }
                _ => b.guard("stop", vec![term(rng, &bound)]),
            };
        }

        let body = rng.gen_range(0..=2);
        for i in 0..body {
            let (c, key, data) = if rng.gen_bool(0.05) {
                (fail, Vec::new(), Vec::new())
            } else {
                let c = rng.gen_range(0..cs.len());
                let key: Vec<Pattern> = (0..shapes[c].key).map(|_| term(rng, &bound)).collect();
                let data: Vec<Pattern> = (0..shapes[c].data).map(|_| term(rng, &bound)).collect();
                (cs[c], key, data)
            };
            b = if i == 0 { b.then(c, key) } else { b.and(c, key) };
            if !data.is_empty() {
                b = b.with(data);
            }
        }
        drop(b);
    }
    h.compile().ok()
}

fn random_fact(rng: &mut ChaCha8Rng, program: &Program) -> Fact {
    let sigs = &program.constraints()[1..];
    let sig = &sigs[rng.gen_range(0..sigs.len())];
    let key: Vec<Value> = (0..sig.key.len()).map(|_| Value::Int(small(rng))).collect();
    let data: Vec<Value> = (0..sig.data.len()).map(|_| Value::Int(small(rng))).collect();
    Fact::new(&sig.name, key, data)
}

pub fn random_sample(seed: u64) -> Sample {
    let mut rng = rng(seed);
    let program = loop {
        if let Some(p) = random_program(&mut rng) {
            break p;
        }
    };
    let tells = (0..rng.gen_range(1..=30)).map(|_| random_fact(&mut rng, &program)).collect();
    Sample { seed, program: Arc::new(program), tells }
}

// ---------------------------------------------------------------------------
// Engine and oracle drivers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub store: Vec<Fact>,
    pub goal: Vec<Fact>,
    pub status: Status,
    pub log: Vec<EventKind>,
    /// The first rejected tell, as an error code.
    pub rejected: Option<&'static str>,
    pub budget_tripped: bool,
}

pub fn recorder(h: &mut Handler) -> Arc<Mutex<Vec<Event>>> {
    let log = Arc::new(Mutex::new(Vec::new()));
    let sink = log.clone();
    h.subscribe(move |e: &Event, _: &mut ListenerContext<'_>| {
        sink.lock().unwrap().push(e.clone());
        Ok(())
    });
    log
}

/// Aborts a run once more than `budget` facts have been dequeued.
pub fn limit_dequeues(h: &mut Handler, budget: usize) {
    let mut seen = 0;
    h.subscribe(move |e: &Event, _: &mut ListenerContext<'_>| {
        if matches!(e.kind, EventKind::Dequeued { .. }) {
            seen += 1;
            if seen > budget {
                return Err(ListenerError::new("budget"));
            }
        }
        Ok(())
    });
}

pub fn engine_run(program: &Arc<Program>, tells: &[Fact], goal_limit: Option<usize>, drain: bool) -> RunResult {
    let mut h = Handler::from_shared(program.clone());
    h.set_goal_limit(goal_limit);
    let log = recorder(&mut h);
    limit_dequeues(&mut h, BUDGET);
    let mut rejected = None;
    let mut budget_tripped = false;
    'tells: for f in tells {
        let mut result = h.tell(f.clone());
        loop {
            match result {
                Err(cr_core::EngineError::Fault(cr_core::EngineFault::Listener(_))) => {
                    budget_tripped = true;
                    break 'tells;
                }
                Err(e) => {
                    rejected = Some(e.code());
                    break 'tells;
                }
                Ok(RunOutcome::Suspended) if drain => result = h.resume(),
                Ok(_) => break,
            }
        }
    }
    let mut log: Vec<EventKind> = log.lock().unwrap().iter().map(|e| e.kind.clone()).collect();
    if budget_tripped {
        // the engine reports the dequeue that tripped the budget; the oracle stops before it
        log.pop();
    }
    RunResult {
        store: h.facts(),
        goal: h.goal().cloned().collect(),
        status: h.status(),
        log,
        rejected,
        budget_tripped,
    }
}

pub fn oracle_result(program: &Program, tells: &[Fact], goal_limit: Option<usize>, drain: bool) -> RunResult {
    let mut o = Oracle::new(program);
    o.set_goal_limit(goal_limit);
    o.set_budget(Some(BUDGET));
    let mut rejected = None;
    let mut budget_tripped = false;
    'tells: for f in tells {
        let mut result = o.tell(f.clone());
        loop {
            match result {
                Err(OracleStop::BudgetExceeded) => {
                    budget_tripped = true;
                    break 'tells;
                }
                Err(OracleStop::Error(e)) => {
                    rejected = Some(e.code());
                    break 'tells;
                }
                Ok(RunOutcome::Suspended) if drain => result = o.resume(),
                Ok(_) => break,
            }
        }
    }
    RunResult {
        store: o.store(),
        goal: o.goal(),
        status: o.status(),
        log: o.log().to_vec(),
        rejected,
        budget_tripped,
    }
}

// ---------------------------------------------------------------------------
// Checks shared with the acceptance runner
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
pub struct DiffSummary {
    pub compared: usize,
    pub discarded: usize,
    pub elapsed: Duration,
}

/// Compares engine and oracle on `want` terminating random programs.
pub fn check_differential(want: usize) -> Result<DiffSummary, String> {
    let start = Instant::now();
    let mut summary = DiffSummary::default();
    let mut seed = 0;
    while summary.compared < want {
        let sample = random_sample(seed);
        let engine = engine_run(&sample.program, &sample.tells, None, false);
        let oracle = oracle_result(&sample.program, &sample.tells, None, false);
        if engine.budget_tripped && oracle.budget_tripped {
            summary.discarded += 1;
        } else if engine != oracle {
            return Err(format!("seed {seed}: engine and oracle disagree\n{}", diff(&engine, &oracle)));
        } else {
            summary.compared += 1;
        }
        seed += 1;
        if seed as usize > want * 4 {
            return Err(format!("only {} of {want} samples terminated", summary.compared));
        }
    }
    summary.elapsed = start.elapsed();
    Ok(summary)
}

fn diff(a: &RunResult, b: &RunResult) -> String {
    let first = a.log.iter().zip(&b.log).position(|(x, y)| x != y).unwrap_or(a.log.len().min(b.log.len()));
    format!(
        "status {:?} vs {:?}; rejected {:?} vs {:?}; budget {} vs {}\nstore {:?}\nvs    {:?}\nfirst log difference at {first}: {:?} vs {:?}",
        a.status,
        b.status,
        a.rejected,
        b.rejected,
        a.budget_tripped,
        b.budget_tripped,
        a.store,
        b.store,
        a.log.get(first),
        b.log.get(first)
    )
}

/// Limit-induced suspensions followed by resumes reach the unlimited result.
pub fn check_suspension(samples: usize, limits: &[usize]) -> Result<usize, String> {
    let mut checked = 0;
    let mut seed = 0;
    while checked < samples {
        let sample = random_sample(seed);
        seed += 1;
        let base = engine_run(&sample.program, &sample.tells, None, true);
        if base.budget_tripped {
            continue;
        }
        let strip = |log: &[EventKind]| -> Vec<EventKind> {
            log.iter().filter(|k| !matches!(k, EventKind::Suspended { .. })).cloned().collect()
        };
        for &limit in limits {
            let run = engine_run(&sample.program, &sample.tells, Some(limit), true);
            if (&run.store, &run.goal, run.status, run.rejected) != (&base.store, &base.goal, base.status, base.rejected)
                || strip(&run.log) != strip(&base.log)
            {
                return Err(format!("seed {}: goal_limit {limit} changes the result\n{}", sample.seed, diff(&run, &base)));
            }
        }
        checked += 1;
    }
    Ok(checked)
}

pub fn dom(x: &str, lo: i64, hi: i64) -> Fact {
    Fact::new("dom", [x], [lo, hi])
}

pub fn rel(name: &str, a: &str, b: &str) -> Fact {
    Fact::new(name, [a, b], NONE)
}

/// Interval handler results equal the closed-form intersection for every
/// tested permutation of random bound multisets.
/// Returns (runs, runs that ended Failed).
pub fn check_interval_convergence(multisets: usize, permutations: usize) -> Result<(usize, usize), String> {
    let mut rng = rng(0x1_2345);
    let vars = ["x", "y", "z"];
    let (mut runs, mut failed) = (0, 0);
    for m in 0..multisets {
        let nvars = rng.gen_range(1..=3);
        let mut tells: Vec<Fact> = (0..rng.gen_range(1..=8))
            .map(|_| {
                let lo = rng.gen_range(-10..=10);
                let hi = rng.gen_range(lo..=lo + 40);
                dom(vars[rng.gen_range(0..nvars)], lo, hi)
            })
            .collect();
        let expected: Option<Vec<Fact>> = vars[..nvars]
            .iter()
            .filter_map(|v| {
                let bounds: Vec<(i64, i64)> = tells
                    .iter()
                    .filter(|f| f.key[0].as_str() == Some(*v))
                    .map(|f| (f.data[0].as_int().unwrap(), f.data[1].as_int().unwrap()))
                    .collect();
                if bounds.is_empty() {
                    return None;
                }
                Some(interval_fixpoint_bounds(&bounds).map(|(lo, hi)| dom(v, lo, hi)))
            })
            .collect();
        for _ in 0..permutations {
            tells.shuffle(&mut rng);
            let mut h = order_interval();
            let mut outcome = RunOutcome::Fixpoint;
            for f in &tells {
                outcome = h.tell(f.clone()).map_err(|e| format!("multiset {m}: {e}"))?;
                if outcome == RunOutcome::Failed {
                    break;
                }
            }
            match (&expected, outcome) {
                (None, RunOutcome::Failed) => failed += 1,
                (Some(facts), RunOutcome::Fixpoint) if h.facts() == *facts => {}
                _ => {
                    return Err(format!(
                        "multiset {m} {tells:?}: expected {expected:?}, engine {outcome} with {:?}",
                        h.facts()
                    ))
                }
            }
            runs += 1;
        }
    }
    Ok((runs, failed))
}

#[derive(Debug, Clone, Copy)]
enum TxOp {
    Tell,
    Begin,
    Commit,
    Partial,
    Rollback,
}

fn order_fact(rng: &mut ChaCha8Rng) -> Fact {
    let order = ["a", "b", "c"];
    let kind = rng.gen_range(0..6);
    if kind < 4 {
        let mut pick = || order[rng.gen_range(0..3)];
        let name = ["leq", "lt", "eq", "neq"][kind];
        rel(name, pick(), pick())
    } else {
        let lo = rng.gen_range(0..10);
        dom(["x", "y"][rng.gen_range(0..2)], lo, lo + rng.gen_range(-1..8))
    }
}

/// Random begin/commit/partial_commit/rollback sequences against a model
/// stack of expected savepoints.
pub fn check_transactions(sequences: usize, max_depth: usize) -> Result<usize, String> {
    let mut rng = rng(0x7a);
    let mut ops_run = 0;
    for s in 0..sequences {
        let mut h = order_interval();
        let mut saved = Vec::new();
        for step in 0..rng.gen_range(10..60) {
            let op = match rng.gen_range(0..10) {
                0..=3 => TxOp::Tell,
                4 | 5 if saved.len() < max_depth => TxOp::Begin,
                6 => TxOp::Commit,
                7 => TxOp::Partial,
                _ => TxOp::Rollback,
            };
            let ctx = |what: &str| format!("sequence {s} step {step} ({op:?}): {what}");
            let before = h.state().clone();
            match op {
                TxOp::Tell => {
                    let f = order_fact(&mut rng);
                    if before.status() == Status::Failed {
                        if h.tell(f).is_ok() || h.state() != &before {
                            return Err(ctx("tell on a failed handler changed state"));
                        }
                    } else {
                        h.tell(f).map_err(|e| ctx(&e.to_string()))?;
                    }
                }
                TxOp::Begin => {
                    let d = h.begin().map_err(|e| ctx(&e.to_string()))?;
                    saved.push(before.clone());
                    if d != saved.len() || h.state() != &before {
                        return Err(ctx("begin changed state or depth"));
                    }
                }
                TxOp::Commit | TxOp::Partial | TxOp::Rollback if saved.is_empty() => {
                    let r = match op {
                        TxOp::Commit => h.commit(),
                        TxOp::Partial => h.partial_commit(),
                        _ => h.rollback(),
                    };
                    if r != Err(cr_core::EngineError::NoOpenTransaction) || h.state() != &before {
                        return Err(ctx("expected no-open-transaction"));
                    }
                }
                TxOp::Commit => {
                    saved.pop();
                    let d = h.commit().map_err(|e| ctx(&e.to_string()))?;
                    if d != saved.len() || h.state() != &before {
                        return Err(ctx("commit changed state"));
                    }
                }
                TxOp::Partial => {
                    *saved.last_mut().unwrap() = before.clone();
                    let d = h.partial_commit().map_err(|e| ctx(&e.to_string()))?;
                    if d != saved.len() || h.state() != &before {
                        return Err(ctx("partial commit changed state"));
                    }
                }
                TxOp::Rollback => {
                    let expected = saved.pop().unwrap();
                    let d = h.rollback().map_err(|e| ctx(&e.to_string()))?;
                    if d != saved.len() || h.state() != &expected {
                        return Err(ctx("rollback did not restore the savepoint"));
                    }
                    if h.facts() != Handler::view(&h).facts() {
                        return Err(ctx("inconsistent views"));
                    }
                }
            }
            ops_run += 1;
        }
    }
    Ok(ops_run)
}

/// One minimal faulty handler per compilation fault class, each with the
/// faulty rule placed second so the reported index is meaningful.
pub fn fault_cases() -> Vec<(&'static str, cr_core::FaultKind, cr_core::FaultLocation, cr_core::HandlerFault)> {
    use cr_core::{FaultKind as K, FaultLocation as L, RuleId};
    use TypeTag::Str;

    fn base() -> (HandlerBuilder, [Symbol; 4]) {
        let mut h = HandlerBuilder::new("faults");
        let syms = h.symbols(["leq", "eq", "X", "Y"]);
        h.constraint(syms[0], [Str, Str]);
        h.constraint(syms[1], [Str, Str]);
        h.guard(GuardSpec::new("copy", [Param::str(), Param::Out]).void(), |g| {
            let v = g.value(0)?.clone();
            g.set(1, v)?;
            Ok(true)
        });
        h.when(syms[0], [syms[2], syms[2]]);
        (h, syms)
    }
    let rule2 = |atom| L::Rule { rule: RuleId(2), atom };
    let mut cases = Vec::new();
    let mut push = |name, kind, loc, h: HandlerBuilder| cases.push((name, kind, loc, h.compile().unwrap_err()));

    let (mut h, [leq, ..]) = base();
    h.constraint(leq, [Str]);
    push("DuplicateConstraint", K::DuplicateConstraint, L::Declaration(2), h);

    let (mut h, [leq, _, x, y]) = base();
    let nope = h.symbol("nope");
    h.when(leq, [x, y]).then(nope, [x]);
    push("UnknownConstraint", K::UnknownConstraint, rule2(Some(1)), h);

    let (mut h, [leq, _, x, _]) = base();
    h.when(leq, [x]);
    push("ArityMismatch", K::ArityMismatch, rule2(Some(0)), h);

    let (mut h, [leq, _, x, y]) = base();
    h.when(leq, [x, y]).guard("nope", [x]);
    push("UnknownGuard", K::UnknownGuard, rule2(Some(1)), h);

    let (mut h, [leq, eq, x, _]) = base();
    let z = h.symbol("Z");
    h.when(leq, [x, x]).then(eq, [x, z]);
    push("UnboundBodySymbol", K::UnboundBodySymbol, rule2(Some(1)), h);

    let (mut h, [leq, _, x, y]) = base();
    let z = h.symbol("Z");
    h.when(leq, [x, y]).guard("!copy", [x, z]);
    push("NegatedGuardWithOutParam", K::NegatedGuardWithOutParam, rule2(Some(1)), h);

    let (mut h, [leq, _, x, y]) = base();
    h.when(leq, [x, y]).passive().and(leq, [y, x]).passive();
    push("AllHeadsPassive", K::AllHeadsPassive, rule2(None), h);
    cases
}

pub fn check_fault_suite() -> Result<usize, String> {
    let cases = fault_cases();
    for (name, kind, loc, fault) in &cases {
        if fault.kind != *kind || fault.location != *loc {
            return Err(format!("{name}: expected {kind:?} at {loc}, got {:?} at {}", fault.kind, fault.location));
        }
    }
    Ok(cases.len())
}

// ---------------------------------------------------------------------------
// Worked-example fixtures and golden files
// ---------------------------------------------------------------------------

pub const FIXTURES: [&str; 3] = ["interval", "antisymmetry", "failure"];

fn fixture(name: &str) -> (Vec<Fact>, &'static str) {
    match name {
        "interval" => (vec![dom("x", 0, 10), dom("x", 3, 15)], "dom"),
        "antisymmetry" => (vec![rel("leq", "a", "b"), rel("leq", "b", "a")], "eq"),
        "failure" => (vec![rel("neq", "a", "a")], "neq"),
        _ => panic!("unknown fixture {name}"),
    }
}

/// The expected final store of each fixture.
pub fn fixture_store(name: &str) -> (Vec<Fact>, Status) {
    match name {
        "interval" => (vec![dom("x", 3, 10)], Status::Fixpoint),
        "antisymmetry" => (vec![rel("eq", "a", "b"), rel("eq", "b", "a")], Status::Fixpoint),
        "failure" => (vec![], Status::Failed),
        _ => panic!("unknown fixture {name}"),
    }
}

/// One trace line per engine event.
pub fn fixture_trace(name: &str) -> (String, Handler) {
    let (tells, _) = fixture(name);
    let mut h = order_interval();
    let log = recorder(&mut h);
    for f in tells {
        h.tell(f).unwrap();
    }
    let text = log.lock().unwrap().iter().map(|e| format!("{e}\n")).collect();
    (text, h)
}

/// Client lines prefixed `> `, server lines `< `, in the order a single
/// client observes them.
pub fn fixture_transcript(name: &str) -> String {
    use cr_core::session::{Outbox, Session};
    use cr_core::wire::{Command, Request};

    let (tells, select) = fixture(name);
    let (_inbox_tx, inbox_rx) = std::sync::mpsc::channel();
    let outbox = Arc::new(Outbox::default());
    let (client_tx, client_rx) = std::sync::mpsc::channel();
    outbox.add(0, client_tx);
    let mut session = Session::new(order_interval(), inbox_rx, outbox);

    let mut out = format!("< {}\n", session.hello().to_line());
    let mut requests: Vec<Command> = tells
        .into_iter()
        .map(|f| Command::Tell { constraint: f.constraint.to_string(), key: f.key.to_vec(), data: f.data.to_vec() })
        .collect();
    requests.push(Command::Select { constraint: select.into(), key: None });
    requests.push(Command::Rollback);
    for (i, cmd) in requests.into_iter().enumerate() {
        let req = Request::new(i + 1, cmd);
        out += &format!("> {}\n", req.to_line());
        let reply = session.execute(req);
        for line in client_rx.try_iter() {
            out += &format!("< {line}\n");
        }
        out += &format!("< {}\n", cr_core::wire::ServerMessage::Reply(reply).to_line());
    }
    out
}

pub fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares generated text with a golden file, or rewrites the file when
/// `UPDATE_GOLDEN` is set.
pub fn check_golden(file: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(file);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).map_err(|e| format!("{}: {e}", path.display()))?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected != actual {
        let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b);
        return Err(format!("{file} differs (first differing line {line:?}); rerun with UPDATE_GOLDEN=1 and review"));
    }
    Ok(())
}

/// Every transcript line decodes and re-encodes to the same bytes.
pub fn check_round_trip(transcript: &str) -> Result<usize, String> {
    use cr_core::wire::{Request, ServerMessage};
    let mut n = 0;
    for line in transcript.lines() {
        let again = if let Some(req) = line.strip_prefix("> ") {
            Request::parse(req).map_err(|r| format!("{r:?}"))?.to_line()
        } else if let Some(msg) = line.strip_prefix("< ") {
            ServerMessage::from_line(msg).map_err(|e| e.to_string())?.to_line()
        } else {
            return Err(format!("bad transcript line {line}"));
        };
        if again != line[2..] {
            return Err(format!("round trip changed\n{line}\n  {again}"));
        }
        n += 1;
    }
    Ok(n)
}

/// Worked examples: exact final stores, locked event logs and transcripts.
pub fn check_fixtures() -> Result<(), String> {
    for name in FIXTURES {
        let (trace, h) = fixture_trace(name);
        let (store, status) = fixture_store(name);
        if h.facts() != store || h.status() != status {
            return Err(format!("{name}: got {:?} {:?}", h.status(), h.facts()));
        }
        check_golden(&format!("{name}.log"), &trace)?;
    }
    Ok(())
}

pub fn check_protocol() -> Result<usize, String> {
    use cr_core::wire::ServerMessage;
    let mut lines = 0;
    for name in FIXTURES {
        let transcript = fixture_transcript(name);
        check_golden(&format!("{name}.jsonl"), &transcript)?;
        let stored = std::fs::read_to_string(golden_dir().join(format!("{name}.jsonl"))).map_err(|e| e.to_string())?;
        lines += check_round_trip(&stored)?;
    }
    for i in [i64::MIN, i64::MAX, 0, -1] {
        let fact = Fact::new("v", [i], [i]);
        let msg = ServerMessage::Event { seq: 1, event: EventKind::Told { fact } };
        let line = msg.to_line();
        if !line.contains(&format!("\"{i}\"")) || ServerMessage::from_line(&line).ok() != Some(msg) {
            return Err(format!("integer {i} does not round-trip: {line}"));
        }
    }
    Ok(lines)
}

fn fired_rules(log: &Mutex<Vec<Event>>) -> Vec<u32> {
    log.lock()
        .unwrap()
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::RuleFired(r) => Some(r.rule),
            _ => None,
        })
        .collect()
}

fn pq() -> (HandlerBuilder, [Symbol; 5]) {
    let mut h = HandlerBuilder::new("pq");
    let syms = h.symbols(["p", "q", "o1", "o2", "X"]);
    for c in &syms[..4] {
        h.constraint(*c, [TypeTag::Int]);
    }
    (h, syms)
}

fn int_fact(name: &str, i: i64) -> Fact {
    Fact::new(name, [i], NONE)
}

/// Two rules fire on one stored fact within one pass, although the first
/// already marked it for removal.
pub fn check_simultaneity() -> Result<(), String> {
    let (mut h, [p, q, o1, o2, x]) = pq();
    h.when(p, [x]).keep().and(q, [x]).then(o1, [x]);
    h.when(p, [x]).keep().and(q, [x]).keep().then(o2, [x]);
    let mut h = h.build().map_err(|e| e.to_string())?;
    h.tell(int_fact("q", 1)).map_err(|e| e.to_string())?;
    let log = recorder(&mut h);
    h.tell(int_fact("p", 1)).map_err(|e| e.to_string())?;
    let kinds: Vec<&str> = log.lock().unwrap().iter().map(|e| e.kind.name()).collect();
    if kinds[..6] != ["told", "dequeued", "rule_fired", "rule_fired", "fact_removed", "fact_stored"] {
        return Err(format!("unexpected pass {kinds:?}"));
    }
    let want = vec![int_fact("p", 1), int_fact("o1", 1), int_fact("o2", 1)];
    if h.facts() != want {
        return Err(format!("store {:?}", h.facts()));
    }
    Ok(())
}

/// An earlier rule consuming the active fact suppresses later rules.
pub fn check_rule_order_cut() -> Result<(), String> {
    let (mut h, [p, _, o1, o2, x]) = pq();
    h.when(p, [x]).then(o1, [x]);
    h.when(p, [x]).then(o2, [x]);
    let mut h = h.build().map_err(|e| e.to_string())?;
    let log = recorder(&mut h);
    h.tell(int_fact("p", 1)).map_err(|e| e.to_string())?;
    let fired = fired_rules(&log);
    if fired != [1] || h.facts() != [int_fact("o1", 1)] {
        return Err(format!("fired {fired:?}, store {:?}", h.facts()));
    }
    Ok(())
}

/// The symmetric leq rule fires exactly once per pair.
pub fn check_passive() -> Result<(), String> {
    for (a, b) in [("a", "b"), ("b", "a"), ("p", "q")] {
        let mut h = order_interval();
        let log = recorder(&mut h);
        h.tell(rel("leq", a, b)).map_err(|e| e.to_string())?;
        h.tell(rel("leq", b, a)).map_err(|e| e.to_string())?;
        let n = fired_rules(&log).iter().filter(|&&r| r == 5).count();
        if n != 1 {
            return Err(format!("rule 5 fired {n} times for {a},{b}"));
        }
    }
    Ok(())
}

/// The duplicate-eq rule consumes the new fact and keeps the stored one.
pub fn check_keep() -> Result<(), String> {
    let mut h = order_interval();
    h.tell(rel("eq", "b", "a")).map_err(|e| e.to_string())?;
    let before = h.facts();
    let log = recorder(&mut h);
    h.tell(rel("eq", "b", "a")).map_err(|e| e.to_string())?;
    let events = log.lock().unwrap().clone();
    let firing = events.iter().find_map(|e| match &e.kind {
        EventKind::RuleFired(r) => Some(r.clone()),
        _ => None,
    });
    let Some(firing) = firing else { return Err("no rule fired".into()) };
    let removed = events.iter().any(|e| matches!(e.kind, EventKind::FactRemoved { .. }));
    if firing.rule != 6 || firing.consumed != [rel("eq", "b", "a")] || removed || h.facts() != before {
        return Err(format!("{firing:?}, store {:?}", h.facts()));
    }
    Ok(())
}

pub fn check_semantic_fixtures() -> Result<(), String> {
    check_simultaneity().map_err(|e| format!("simultaneity: {e}"))?;
    check_rule_order_cut().map_err(|e| format!("rule-order cut: {e}"))?;
    check_passive().map_err(|e| format!("passive: {e}"))?;
    check_keep().map_err(|e| format!("keep: {e}"))
}
