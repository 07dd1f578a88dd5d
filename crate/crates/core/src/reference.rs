//! A naive reference implementation of the main loop and rule firing, used
//! to test [`Handler`](crate::Handler) differentially.
//!
//! The store is a plain list scanned linearly, rules are walked in source
//! order without the occurrence index, and matching is done here from
//! scratch. Only guard functions and the compiled rule structures are shared
//! with the engine.

use std::collections::VecDeque;

use crate::engine::{RunOutcome, Status};
use crate::error::{EngineError, EngineFault};
use crate::events::{EventKind, RuleFiring, SuspendReason};
use crate::fact::Fact;
use crate::guard::{GuardArg, GuardOutcome, Param};
use crate::rule::{HeadElement, Pattern, Program, Rule};
use crate::symbol::Symbol;
use crate::value::{Tuple, Value};

/// Why the oracle stopped without finishing a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleStop {
    Error(EngineError),
    /// More goal facts were dequeued than the configured budget.
    BudgetExceeded,
}

impl From<EngineError> for OracleStop {
    fn from(e: EngineError) -> Self {
        OracleStop::Error(e)
    }
}

impl From<EngineFault> for OracleStop {
    fn from(e: EngineFault) -> Self {
        OracleStop::Error(e.into())
    }
}

type Env = Vec<(Symbol, Value)>;

pub struct Oracle<'p> {
    program: &'p Program,
    goal: VecDeque<Fact>,
    store: Vec<Fact>,
    status: Status,
    goal_limit: Option<usize>,
    budget: Option<usize>,
    dequeued: usize,
    log: Vec<EventKind>,
}

impl<'p> Oracle<'p> {
    pub fn new(program: &'p Program) -> Self {
        Oracle {
            program,
            goal: VecDeque::new(),
            store: Vec::new(),
            status: Status::Fixpoint,
            goal_limit: None,
            budget: None,
            dequeued: 0,
            log: Vec::new(),
        }
    }

    pub fn set_goal_limit(&mut self, limit: Option<usize>) {
        self.goal_limit = limit;
    }

    /// Caps the total number of dequeued goal facts.
    pub fn set_budget(&mut self, budget: Option<usize>) {
        self.budget = budget;
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn goal(&self) -> Vec<Fact> {
        self.goal.iter().cloned().collect()
    }

    /// Store contents sorted by constraint declaration order, then key.
    pub fn store(&self) -> Vec<Fact> {
        let mut facts = self.store.clone();
        let rank = |f: &Fact| self.program.constraint_id(&f.constraint).map(|c| c.index());
        facts.sort_by(|a, b| rank(a).cmp(&rank(b)).then_with(|| a.key.cmp(&b.key)));
        facts
    }

    /// Every event emitted so far, in order.
    pub fn log(&self) -> &[EventKind] {
        &self.log
    }

    pub fn tell(&mut self, fact: Fact) -> Result<RunOutcome, OracleStop> {
        if self.status == Status::Failed {
            return Err(EngineError::TellOnFailed.into());
        }
        self.program.check_fact(&fact)?;
        self.goal.push_back(fact.clone());
        self.log.push(EventKind::Told { fact });
        self.main_loop()
    }

    pub fn resume(&mut self) -> Result<RunOutcome, OracleStop> {
        if !matches!(self.status, Status::Suspended(_)) {
            return Err(EngineError::ResumeNotSuspended.into());
        }
        self.main_loop()
    }

    fn main_loop(&mut self) -> Result<RunOutcome, OracleStop> {
        self.status = Status::Running;
        let mut forced_exit = false;
        let mut limit_exit = false;
        while !forced_exit && !limit_exit && !self.goal.is_empty() {
            let phi = self.goal.pop_front().unwrap();
            self.dequeued += 1;
            if self.budget.is_some_and(|b| self.dequeued > b) {
                return Err(OracleStop::BudgetExceeded);
            }
            self.log.push(EventKind::Dequeued { fact: phi.clone() });
            if phi.is_fail() {
                self.status = Status::Failed;
                self.log.push(EventKind::Failure);
                return Ok(RunOutcome::Failed);
            }
            self.fire_all_rules(phi, &mut forced_exit)?;
            if let Some(limit) = self.goal_limit {
                limit_exit = self.goal.len() > limit;
            }
        }
        if self.goal.is_empty() {
            self.status = Status::Fixpoint;
            self.log.push(EventKind::Fixpoint);
            return Ok(RunOutcome::Fixpoint);
        }
        let reason = if forced_exit { SuspendReason::Forced } else { SuspendReason::LimitExceeded };
        self.status = Status::Suspended(reason);
        self.log.push(EventKind::Suspended { reason });
        Ok(RunOutcome::Suspended)
    }

    fn fire_all_rules(&mut self, phi: Fact, forced_exit: &mut bool) -> Result<(), OracleStop> {
        let program = self.program;
        let mut u: Vec<Fact> = Vec::new();
        for rule in program.rules() {
            for (i, head) in rule.heads.iter().enumerate() {
                if head.passive || program.signature(head.constraint).name != phi.constraint {
                    continue;
                }
                let Some(env) = matches(head, &phi, &Vec::new()) else { continue };
                let mut fired = false;
                let mut partners = Vec::new();
                let mut consumed_partners = Vec::new();
                let mut body_facts = Vec::new();
                for (env, combo) in self.combinations(rule, i, env) {
                    let Some(env) = self.guards(rule, env, forced_exit)? else { continue };
                    fired = true;
                    let body = instantiate(program, rule, &env)?;
                    self.goal.extend(body.iter().cloned());
                    body_facts.extend(body);
                    for (j, f) in combo {
                        if !rule.heads[j].keep {
                            add_unique(&mut u, &f);
                            add_unique(&mut consumed_partners, &f);
                        }
                        add_unique(&mut partners, &f);
                    }
                }
                if !fired {
                    continue;
                }
                // the active fact is listed even when a stored partner equals it
                let mut consumed = if head.keep { Vec::new() } else { vec![phi.clone()] };
                consumed.extend(consumed_partners);
                self.log.push(EventKind::RuleFired(RuleFiring {
                    rule: rule.id.0,
                    head: i,
                    active: phi.clone(),
                    partners,
                    consumed,
                    body: body_facts,
                }));
                if !head.keep {
                    self.remove_all(&u);
                    return Ok(());
                }
            }
        }
        self.remove_all(&u);
        if let Some(pos) = self.store.iter().position(|f| f.constraint == phi.constraint && f.key == phi.key) {
            let old = self.store.remove(pos);
            self.log.push(EventKind::FactRemoved { fact: old });
        }
        self.store.push(phi.clone());
        self.log.push(EventKind::FactStored { fact: phi });
        Ok(())
    }

    fn remove_all(&mut self, u: &[Fact]) {
        for f in u {
            if let Some(pos) = self.store.iter().position(|s| s == f) {
                self.store.remove(pos);
                self.log.push(EventKind::FactRemoved { fact: f.clone() });
            }
        }
    }

    /// All ways to pick pairwise distinct store facts for the heads other
    /// than `active`, lowest head index varying slowest, each head trying
    /// facts in key order.
    fn combinations(&self, rule: &Rule, active: usize, env: Env) -> Vec<(Env, Vec<(usize, Fact)>)> {
        let mut partial = vec![(env, Vec::<(usize, Fact)>::new())];
        for (j, head) in rule.heads.iter().enumerate() {
            if j == active {
                continue;
            }
            let name = &self.program.signature(head.constraint).name;
            let mut candidates: Vec<&Fact> = self.store.iter().filter(|f| &f.constraint == name).collect();
            candidates.sort_by(|a, b| a.key.cmp(&b.key));
            let mut next = Vec::new();
            for (env, chosen) in partial {
                for &c in &candidates {
                    if chosen.iter().any(|(_, f)| f == c) {
                        continue;
                    }
                    if let Some(env) = matches(head, c, &env) {
                        let mut chosen = chosen.clone();
                        chosen.push((j, c.clone()));
                        next.push((env, chosen));
                    }
                }
            }
            partial = next;
        }
        partial
    }

    fn guards(&self, rule: &Rule, mut env: Env, forced_exit: &mut bool) -> Result<Option<Env>, OracleStop> {
        let registry = self.program.guards();
        for g in &rule.guards {
            let id = registry.resolve(&g.name).expect("compiled guards exist");
            let spec = registry.spec(id);
            let mut args = Vec::new();
            for (k, p) in g.args.iter().enumerate() {
                if matches!(spec.param_at(k), Some(Param::Out)) {
                    args.push(GuardArg::Out);
                } else {
                    args.push(GuardArg::In(lookup(self.program, rule, &env, p)?));
                }
            }
            let outcome = registry
                .invoke(id, g.negated, args, forced_exit)
                .map_err(|error| EngineFault::Guard { rule: rule.id, guard: g.name.clone(), error })?;
            let GuardOutcome::Success(outs) = outcome else { return Ok(None) };
            for (k, v) in outs {
                let Pattern::Bind(s) = g.args[k] else { unreachable!() };
                if env.iter().any(|(t, _)| *t == s) {
                    let symbol = self.program.symbol_name(s).to_string();
                    return Err(EngineFault::OutBindingCollision { rule: rule.id, symbol }.into());
                }
                env.push((s, v));
            }
        }
        Ok(Some(env))
    }
}

fn add_unique(list: &mut Vec<Fact>, f: &Fact) {
    if !list.contains(f) {
        list.push(f.clone());
    }
}

fn matches(head: &HeadElement, fact: &Fact, env: &Env) -> Option<Env> {
    if head.key.len() != fact.key.len() || head.data.len() != fact.data.len() {
        return None;
    }
    let mut env = env.clone();
    let patterns = head.key.iter().chain(&head.data);
    let values = fact.key.iter().chain(fact.data.iter());
    for (p, v) in patterns.zip(values) {
        match p {
            Pattern::Wildcard => {}
            Pattern::Literal(l) if l == v => {}
            Pattern::Literal(_) => return None,
            Pattern::Bind(s) => match env.iter().find(|(t, _)| t == s) {
                Some((_, bound)) if bound == v => {}
                Some(_) => return None,
                None => env.push((*s, v.clone())),
            },
        }
    }
    Some(env)
}

fn lookup(program: &Program, rule: &Rule, env: &Env, p: &Pattern) -> Result<Value, EngineFault> {
    let found = match p {
        Pattern::Literal(v) => Some(v.clone()),
        Pattern::Bind(s) => env.iter().find(|(t, _)| t == s).map(|(_, v)| v.clone()),
        Pattern::Wildcard => None,
    };
    found.ok_or_else(|| EngineFault::UnboundSymbol {
        rule: rule.id,
        symbol: match p {
            Pattern::Bind(s) => program.symbol_name(*s).to_string(),
            _ => "_".into(),
        },
    })
}

fn instantiate(program: &Program, rule: &Rule, env: &Env) -> Result<Vec<Fact>, EngineFault> {
    let mut out = Vec::new();
    for atom in &rule.body {
        let sig = program.signature(atom.constraint);
        let field = |ps: &[Pattern]| ps.iter().map(|p| lookup(program, rule, env, p)).collect::<Result<Tuple, _>>();
        let fact = Fact { constraint: sig.name.clone(), key: field(&atom.key)?, data: field(&atom.data)? };
        sig.check(&fact).map_err(|e| EngineFault::BodyTypeError { rule: rule.id, reason: e.to_string() })?;
        out.push(fact);
    }
    Ok(out)
}

/// Final state and event log of a reference run.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub goal: Vec<Fact>,
    pub store: Vec<Fact>,
    pub status: Status,
    pub log: Vec<EventKind>,
    /// Set when a tell was rejected or the budget ran out; the run stopped there.
    pub stopped: Option<OracleStop>,
}

/// Tells every fact in order, stopping at the first rejected tell.
pub fn oracle_run(program: &Program, tells: &[Fact], goal_limit: Option<usize>, budget: Option<usize>) -> OracleRun {
    let mut oracle = Oracle::new(program);
    oracle.set_goal_limit(goal_limit);
    oracle.set_budget(budget);
    let stopped = tells.iter().find_map(|f| oracle.tell(f.clone()).err());
    OracleRun { goal: oracle.goal(), store: oracle.store(), status: oracle.status, log: oracle.log, stopped }
}
