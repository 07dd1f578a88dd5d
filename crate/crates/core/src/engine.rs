//! The operational core: store, goal queue, the main loop and rule firing.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use crate::error::{EngineError, EngineFault};
use crate::events::{EventBus, EventKind, Listener, RuleFiring, SubscriptionId, SuspendReason};
use crate::fact::Fact;
use crate::guard::GuardArg;
use crate::guard::GuardOutcome;
use crate::rule::{match_head, BindingFrame, ConstraintId, Pattern, Program, Rule};
use crate::value::{values_equal, Tuple, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Fixpoint,
    Suspended(SuspendReason),
    Failed,
    Running,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunOutcome {
    Fixpoint,
    Suspended,
    Failed,
}

impl RunOutcome {
    pub fn name(self) -> &'static str {
        match self {
            RunOutcome::Fixpoint => "fixpoint",
            RunOutcome::Suspended => "suspended",
            RunOutcome::Failed => "failed",
        }
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Known facts: per constraint, an ordered map from key tuple to data tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Store {
    tables: Vec<BTreeMap<Tuple, Tuple>>,
}

impl Store {
    pub(crate) fn new(constraints: usize) -> Self {
        Store { tables: vec![BTreeMap::new(); constraints] }
    }

    pub fn get(&self, constraint: ConstraintId, key: &[Value]) -> Option<(&Tuple, &Tuple)> {
        self.tables[constraint.index()].get_key_value(key)
    }

    /// Facts of one constraint in key order.
    pub fn iter(&self, constraint: ConstraintId) -> impl Iterator<Item = (&Tuple, &Tuple)> {
        self.tables[constraint.index()].iter()
    }

    pub fn len(&self) -> usize {
        self.tables.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&mut self, constraint: ConstraintId, key: Tuple, data: Tuple) -> Option<Tuple> {
        self.tables[constraint.index()].insert(key, data)
    }

    fn remove(&mut self, constraint: ConstraintId, key: &[Value]) -> Option<(Tuple, Tuple)> {
        self.tables[constraint.index()].remove_entry(key)
    }
}

/// The state a transaction saves and restores: goal, store and status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerState {
    pub(crate) goal: VecDeque<Fact>,
    pub(crate) store: Store,
    pub(crate) status: Status,
}

impl HandlerState {
    fn new(constraints: usize) -> Self {
        HandlerState { goal: VecDeque::new(), store: Store::new(constraints), status: Status::Fixpoint }
    }

    pub fn goal(&self) -> &VecDeque<Fact> {
        &self.goal
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn status(&self) -> Status {
        self.status
    }
}

/// Read-only access to a handler's state, also handed to listeners while
/// the engine is paused in the middle of a run.
#[derive(Clone, Copy)]
pub struct StateView<'a> {
    program: &'a Program,
    state: &'a HandlerState,
}

impl<'a> StateView<'a> {
    pub fn program(&self) -> &'a Program {
        self.program
    }

    pub fn state(&self) -> &'a HandlerState {
        self.state
    }

    pub fn status(&self) -> Status {
        self.state.status
    }

    pub fn goal(&self) -> impl Iterator<Item = &'a Fact> {
        self.state.goal.iter()
    }

    /// Stored facts of `constraint` in key order.
    pub fn select(&self, constraint: &str) -> Result<Vec<Fact>, EngineError> {
        self.select_matching(constraint, None)
    }

    /// Stored facts whose keys match `pattern` position-wise; `None` in a
    /// position matches anything.
    pub fn select_matching(&self, constraint: &str, pattern: Option<&[Option<Value>]>) -> Result<Vec<Fact>, EngineError> {
        let id = self
            .program
            .constraint_id(constraint)
            .ok_or_else(|| EngineError::UnknownConstraint(constraint.to_string()))?;
        let sig = self.program.signature(id);
        if let Some(p) = pattern {
            if p.len() != sig.key.len() {
                return Err(EngineError::ArityMismatch {
                    constraint: constraint.to_string(),
                    part: "key",
                    expected: sig.key.len(),
                    found: p.len(),
                });
            }
        }
        let matches = |key: &[Value]| {
            pattern.is_none_or(|p| p.iter().zip(key).all(|(want, v)| want.as_ref().is_none_or(|w| values_equal(w, v))))
        };
        Ok(self
            .state
            .store
            .iter(id)
            .filter(|(k, _)| matches(k))
            .map(|(k, d)| Fact { constraint: sig.name.clone(), key: k.clone(), data: d.clone() })
            .collect())
    }

    /// Every stored fact, by declaration order then key order.
    pub fn facts(&self) -> Vec<Fact> {
        self.program
            .constraints()
            .iter()
            .enumerate()
            .flat_map(|(i, sig)| {
                self.state.store.iter(ConstraintId(i)).map(move |(k, d)| Fact {
                    constraint: sig.name.clone(),
                    key: k.clone(),
                    data: d.clone(),
                })
            })
            .collect()
    }
}

/// A handler instance: a compiled rule program plus its private state.
pub struct Handler {
    program: Arc<Program>,
    pub(crate) state: HandlerState,
    pub(crate) savepoints: Vec<HandlerState>,
    pub(crate) bus: EventBus,
    goal_limit: Option<usize>,
}

impl fmt::Debug for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Handler")
            .field("program", &self.program.name())
            .field("state", &self.state)
            .field("depth", &self.savepoints.len())
            .field("goal_limit", &self.goal_limit)
            .finish()
    }
}

impl Handler {
    pub fn new(program: Program) -> Self {
        Self::from_shared(Arc::new(program))
    }

    pub fn from_shared(program: Arc<Program>) -> Self {
        let state = HandlerState::new(program.constraints().len());
        Handler { program, state, savepoints: Vec::new(), bus: EventBus::default(), goal_limit: None }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn shared_program(&self) -> Arc<Program> {
        self.program.clone()
    }

    pub fn view(&self) -> StateView<'_> {
        StateView { program: &self.program, state: &self.state }
    }

    pub fn state(&self) -> &HandlerState {
        &self.state
    }

    pub fn status(&self) -> Status {
        self.state.status
    }

    pub fn goal(&self) -> impl Iterator<Item = &Fact> {
        self.state.goal.iter()
    }

    pub fn select(&self, constraint: &str) -> Result<Vec<Fact>, EngineError> {
        self.view().select(constraint)
    }

    pub fn select_matching(&self, constraint: &str, pattern: &[Option<Value>]) -> Result<Vec<Fact>, EngineError> {
        self.view().select_matching(constraint, Some(pattern))
    }

    pub fn facts(&self) -> Vec<Fact> {
        self.view().facts()
    }

    pub fn goal_limit(&self) -> Option<usize> {
        self.goal_limit
    }

    /// Suspend a run once the goal holds more than `limit` facts after a
    /// firing pass. `None` disables the check.
    pub fn set_goal_limit(&mut self, limit: Option<usize>) {
        self.goal_limit = limit;
    }

    pub fn subscribe(&mut self, listener: impl Listener + 'static) -> SubscriptionId {
        self.bus.subscribe(listener)
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) -> Result<(), EngineError> {
        if self.bus.unsubscribe(id) {
            Ok(())
        } else {
            Err(EngineError::UnknownSubscription(id.0))
        }
    }

    /// Appends a fact to the goal and runs the main loop.
    pub fn tell(&mut self, fact: Fact) -> Result<RunOutcome, EngineError> {
        if self.state.status == Status::Failed {
            return Err(EngineError::TellOnFailed);
        }
        self.program.check_fact(&fact)?;
        self.state.goal.push_back(fact.clone());
        if let Err(fault) = self.emit(EventKind::Told { fact }) {
            return Err(self.abort(fault));
        }
        self.main_loop()
    }

    /// Re-enters the main loop on a suspended handler.
    pub fn resume(&mut self) -> Result<RunOutcome, EngineError> {
        match self.state.status {
            Status::Suspended(_) => self.main_loop(),
            _ => Err(EngineError::ResumeNotSuspended),
        }
    }

    /// Runs the main loop on whatever is in the goal. A failed handler stays failed.
    pub fn run(&mut self) -> Result<RunOutcome, EngineError> {
        if self.state.status == Status::Failed {
            return Ok(RunOutcome::Failed);
        }
        self.main_loop()
    }

    pub(crate) fn emit(&mut self, kind: EventKind) -> Result<(), EngineFault> {
        let view = StateView { program: &self.program, state: &self.state };
        self.bus.emit(kind, view)
    }

    /// Leaves the state resumable after a fault.
    fn abort(&mut self, fault: EngineFault) -> EngineError {
        self.state.status =
            if self.state.goal.is_empty() { Status::Fixpoint } else { Status::Suspended(SuspendReason::Fault) };
        fault.into()
    }

    fn main_loop(&mut self) -> Result<RunOutcome, EngineError> {
        self.state.status = Status::Running;
        let mut exit = None;
        while exit.is_none() {
            let Some(fact) = self.state.goal.pop_front() else { break };
            if let Err(fault) = self.emit(EventKind::Dequeued { fact: fact.clone() }) {
                self.state.goal.push_front(fact);
                return Err(self.abort(fault));
            }
            if fact.is_fail() {
                self.state.status = Status::Failed;
                self.emit(EventKind::Failure)?;
                return Ok(RunOutcome::Failed);
            }
            let mut forced = false;
            if let Err(fault) = self.fire_all_rules(fact, &mut forced) {
                return Err(self.abort(fault));
            }
            if forced {
                exit = Some(SuspendReason::Forced);
            } else if self.goal_limit.is_some_and(|limit| self.state.goal.len() > limit) {
                exit = Some(SuspendReason::LimitExceeded);
            }
        }
        let (status, outcome, event) = match exit {
            Some(reason) if !self.state.goal.is_empty() => {
                (Status::Suspended(reason), RunOutcome::Suspended, EventKind::Suspended { reason })
            }
            _ => (Status::Fixpoint, RunOutcome::Fixpoint, EventKind::Fixpoint),
        };
        self.state.status = status;
        self.emit(event)?;
        Ok(outcome)
    }

    /// Processes one dequeued fact: tries every active occurrence of its
    /// constraint in rule order, then removes consumed partners and either
    /// drops the fact (consumed) or stores it.
    fn fire_all_rules(&mut self, fact: Fact, forced: &mut bool) -> Result<(), EngineFault> {
        let program = self.program.clone();
        let cid = program.constraint_id(&fact.constraint).expect("checked when told or instantiated");
        let goal_before = self.state.goal.len();
        let mut removal = Removal::default();

        for occ in program.index().occurrences(cid) {
            let rule = program.rule(occ.rule);
            let head = &rule.heads[occ.head];
            let Some(frame) = match_head(head, &fact, &BindingFrame::new()) else { continue };
            let others: Vec<usize> = (0..rule.heads.len()).filter(|&i| i != occ.head).collect();
            let mut firing = Firing::default();

            let result = {
                let HandlerState { goal, store, .. } = &mut self.state;
                let mut chosen = Vec::with_capacity(others.len());
                let mut visit = |frame: &BindingFrame, chosen: &[Partner<'_>]| -> Result<(), EngineFault> {
                    let Some(frame) = run_guards(&program, rule, frame, forced)? else { return Ok(()) };
                    firing.fired = true;
                    for f in instantiate_body(&program, rule, &frame)? {
                        goal.push_back(f.clone());
                        firing.body.push(f);
                    }
                    for (partner, &head_pos) in chosen.iter().zip(&others) {
                        let pf = partner.fact(&program);
                        if !rule.heads[head_pos].keep {
                            removal.add(partner.constraint, partner.key.clone());
                            push_unique(&mut firing.consumed, &pf);
                        }
                        push_unique(&mut firing.partners, &pf);
                    }
                    Ok(())
                };
                enumerate(&program, store, rule, &others, &frame, &mut chosen, &mut visit)
            };
            if let Err(fault) = result {
                self.revert_pass(fact, goal_before);
                return Err(fault);
            }
            if !firing.fired {
                continue;
            }
            let consumed_active = !head.keep;
            if consumed_active {
                firing.consumed.insert(0, fact.clone());
            }
            let event = EventKind::RuleFired(RuleFiring {
                rule: rule.id.0,
                head: occ.head,
                active: fact.clone(),
                partners: firing.partners,
                consumed: firing.consumed,
                body: firing.body,
            });
            if let Err(fault) = self.emit(event) {
                self.revert_pass(fact, goal_before);
                return Err(fault);
            }
            if consumed_active {
                return self.apply_removal(&program, removal);
            }
        }

        let mut result = self.apply_removal(&program, removal);
        let sig = program.signature(cid);
        if let Some(old) = self.state.store.insert(cid, fact.key.clone(), fact.data.clone()) {
            let replaced = Fact { constraint: sig.name.clone(), key: fact.key.clone(), data: old };
            result = result.and(self.emit(EventKind::FactRemoved { fact: replaced }));
        }
        result.and(self.emit(EventKind::FactStored { fact }))
    }

    /// Undoes a pass that has not touched the store yet.
    fn revert_pass(&mut self, fact: Fact, goal_before: usize) {
        self.state.goal.truncate(goal_before);
        self.state.goal.push_front(fact);
    }

    /// Removes every marked fact. All mutations happen even when a listener
    /// fails; the first listener error is returned.
    fn apply_removal(&mut self, program: &Program, removal: Removal) -> Result<(), EngineFault> {
        let mut result = Ok(());
        for (cid, key) in removal.items {
            if let Some((key, data)) = self.state.store.remove(cid, &key) {
                let fact = Fact { constraint: program.signature(cid).name.clone(), key, data };
                if result.is_ok() {
                    result = self.emit(EventKind::FactRemoved { fact });
                }
            }
        }
        result
    }
}

#[derive(Default)]
struct Removal {
    items: Vec<(ConstraintId, Tuple)>,
}

impl Removal {
    fn add(&mut self, cid: ConstraintId, key: Tuple) {
        if !self.items.iter().any(|(c, k)| *c == cid && *k == key) {
            self.items.push((cid, key));
        }
    }
}

#[derive(Default)]
struct Firing {
    fired: bool,
    partners: Vec<Fact>,
    consumed: Vec<Fact>,
    body: Vec<Fact>,
}

fn push_unique(list: &mut Vec<Fact>, fact: &Fact) {
    if !list.contains(fact) {
        list.push(fact.clone());
    }
}

struct Partner<'s> {
    constraint: ConstraintId,
    key: &'s Tuple,
    data: &'s Tuple,
}

impl Partner<'_> {
    fn fact(&self, program: &Program) -> Fact {
        Fact {
            constraint: program.signature(self.constraint).name.clone(),
            key: self.key.clone(),
            data: self.data.clone(),
        }
    }
}

type Visit<'v> = dyn FnMut(&BindingFrame, &[Partner<'_>]) -> Result<(), EngineFault> + 'v;

/// Walks every tuple of pairwise-distinct store facts matching the heads in
/// `others`, outermost head first, each in key order.
fn enumerate<'s>(
    program: &Program,
    store: &'s Store,
    rule: &Rule,
    others: &[usize],
    frame: &BindingFrame,
    chosen: &mut Vec<Partner<'s>>,
    visit: &mut Visit<'_>,
) -> Result<(), EngineFault> {
    let depth = chosen.len();
    if depth == others.len() {
        return visit(frame, chosen);
    }
    let head = &rule.heads[others[depth]];
    let cid = head.constraint;
    let name = &program.signature(cid).name;
    let exact_key: Option<Vec<Value>> = head.key.iter().map(|p| frame.resolve(p)).collect();
    let candidates: Box<dyn Iterator<Item = (&'s Tuple, &'s Tuple)>> = match exact_key {
        Some(key) => Box::new(store.get(cid, &key).into_iter()),
        None => Box::new(store.iter(cid)),
    };
    for (key, data) in candidates {
        if chosen.iter().any(|p| p.constraint == cid && p.key == key) {
            continue;
        }
        let candidate = Fact { constraint: name.clone(), key: key.clone(), data: data.clone() };
        if let Some(extended) = match_head(head, &candidate, frame) {
            chosen.push(Partner { constraint: cid, key, data });
            let result = enumerate(program, store, rule, others, &extended, chosen, visit);
            chosen.pop();
            result?;
        }
    }
    Ok(())
}

/// Evaluates the guards left to right; `None` when one fails.
pub(crate) fn run_guards(
    program: &Program,
    rule: &Rule,
    frame: &BindingFrame,
    forced: &mut bool,
) -> Result<Option<BindingFrame>, EngineFault> {
    let mut frame = frame.clone();
    for g in &rule.guards {
        let id = g.resolved();
        let spec = program.guards().spec(id);
        let mut args = Vec::with_capacity(g.args.len());
        for (i, p) in g.args.iter().enumerate() {
            if spec.param_at(i).is_some_and(|param| param.is_out()) {
                args.push(GuardArg::Out);
            } else {
                args.push(GuardArg::In(resolve(program, rule, &frame, p)?));
            }
        }
        let outcome = program.guards().invoke(id, g.negated, args, forced).map_err(|error| EngineFault::Guard {
            rule: rule.id,
            guard: g.name.clone(),
            error,
        })?;
        match outcome {
            GuardOutcome::Failure => return Ok(None),
            GuardOutcome::Success(outs) => {
                for (i, v) in outs {
                    let Pattern::Bind(s) = g.args[i] else { unreachable!("out-parameters are symbols") };
                    if !frame.bind(s, v) {
                        return Err(EngineFault::OutBindingCollision {
                            rule: rule.id,
                            symbol: program.symbol_name(s).to_string(),
                        });
                    }
                }
            }
        }
    }
    Ok(Some(frame))
}

pub(crate) fn instantiate_body(program: &Program, rule: &Rule, frame: &BindingFrame) -> Result<Vec<Fact>, EngineFault> {
    rule.body
        .iter()
        .map(|atom| {
            let sig = program.signature(atom.constraint);
            let key = atom.key.iter().map(|p| resolve(program, rule, frame, p)).collect::<Result<Tuple, _>>()?;
            let data = atom.data.iter().map(|p| resolve(program, rule, frame, p)).collect::<Result<Tuple, _>>()?;
            let fact = Fact { constraint: sig.name.clone(), key, data };
            sig.check(&fact).map_err(|e| EngineFault::BodyTypeError { rule: rule.id, reason: e.to_string() })?;
            Ok(fact)
        })
        .collect()
}

fn resolve(program: &Program, rule: &Rule, frame: &BindingFrame, p: &Pattern) -> Result<Value, EngineFault> {
    frame.resolve(p).ok_or_else(|| EngineFault::UnboundSymbol {
        rule: rule.id,
        symbol: match p {
            Pattern::Bind(s) => program.symbol_name(*s).to_string(),
            _ => "_".to_string(),
        },
    })
}
