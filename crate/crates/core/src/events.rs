//! Publish-subscribe instrumentation of engine steps, and breakpoints.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::StateView;
use crate::error::EngineFault;
use crate::fact::Fact;
use crate::rule::RuleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuspendReason {
    /// A guard called `force_exit`.
    Forced,
    /// The goal grew beyond the configured limit.
    LimitExceeded,
    /// A guard or listener raised an error; the interrupted fact was put back.
    Fault,
}

impl SuspendReason {
    pub fn name(self) -> &'static str {
        match self {
            SuspendReason::Forced => "forced",
            SuspendReason::LimitExceeded => "limit_exceeded",
            SuspendReason::Fault => "fault",
        }
    }
}

/// Summary of one fired occurrence: every successful match combination of
/// one active head element during one pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFiring {
    pub rule: u32,
    pub head: usize,
    pub active: Fact,
    /// Store facts matched by the other heads, in first-match order.
    pub partners: Vec<Fact>,
    /// Facts marked for removal by this occurrence, the active fact first
    /// when its head lacks `keep`.
    pub consumed: Vec<Fact>,
    pub body: Vec<Fact>,
}

impl RuleFiring {
    pub fn rule_id(&self) -> RuleId {
        RuleId(self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Told { fact: Fact },
    Dequeued { fact: Fact },
    RuleFired(RuleFiring),
    FactStored { fact: Fact },
    FactRemoved { fact: Fact },
    Failure,
    Suspended { reason: SuspendReason },
    Fixpoint,
    TxBegin { depth: usize },
    TxCommit { depth: usize },
    TxPartialCommit { depth: usize },
    TxRollback { depth: usize },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Told { .. } => "told",
            EventKind::Dequeued { .. } => "dequeued",
            EventKind::RuleFired(_) => "rule_fired",
            EventKind::FactStored { .. } => "fact_stored",
            EventKind::FactRemoved { .. } => "fact_removed",
            EventKind::Failure => "failure",
            EventKind::Suspended { .. } => "suspended",
            EventKind::Fixpoint => "fixpoint",
            EventKind::TxBegin { .. } => "tx_begin",
            EventKind::TxCommit { .. } => "tx_commit",
            EventKind::TxPartialCommit { .. } => "tx_partial_commit",
            EventKind::TxRollback { .. } => "tx_rollback",
        }
    }

    /// Facts carried by the event payload.
    pub fn facts(&self) -> Vec<&Fact> {
        match self {
            EventKind::Told { fact }
            | EventKind::Dequeued { fact }
            | EventKind::FactStored { fact }
            | EventKind::FactRemoved { fact } => vec![fact],
            EventKind::RuleFired(f) => std::iter::once(&f.active)
                .chain(&f.partners)
                .chain(&f.consumed)
                .chain(&f.body)
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
}

/// One-line trace form, e.g. `#3 rule_fired rule 3 on lt("a", "b")`.
impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}", self.seq, self.kind.name())?;
        match &self.kind {
            EventKind::Told { fact }
            | EventKind::Dequeued { fact }
            | EventKind::FactStored { fact }
            | EventKind::FactRemoved { fact } => write!(f, " {fact}"),
            EventKind::RuleFired(r) => {
                write!(f, " rule {} on {}", r.rule, r.active)?;
                for p in &r.partners {
                    write!(f, " & {p}")?;
                }
                if !r.body.is_empty() {
                    f.write_str(" =>")?;
                    for (i, b) in r.body.iter().enumerate() {
                        write!(f, "{} {b}", if i == 0 { "" } else { "," })?;
                    }
                }
                Ok(())
            }
            EventKind::Suspended { reason } => write!(f, " {}", reason.name()),
            EventKind::TxBegin { depth }
            | EventKind::TxCommit { depth }
            | EventKind::TxPartialCommit { depth }
            | EventKind::TxRollback { depth } => write!(f, " depth {depth}"),
            EventKind::Failure | EventKind::Fixpoint => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubscriptionId(pub u64);

/// Error a listener returns to abort the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListenerError(pub String);

impl ListenerError {
    pub fn new(msg: impl Into<String>) -> Self {
        ListenerError(msg.into())
    }
}

/// Receives every event synchronously on the engine thread. A listener may
/// block, which pauses the engine.
pub trait Listener: Send {
    fn on_event(&mut self, event: &Event, ctx: &mut ListenerContext<'_>) -> Result<(), ListenerError>;
}

impl<F> Listener for F
where
    F: FnMut(&Event, &mut ListenerContext<'_>) -> Result<(), ListenerError> + Send,
{
    fn on_event(&mut self, event: &Event, ctx: &mut ListenerContext<'_>) -> Result<(), ListenerError> {
        self(event, ctx)
    }
}

enum BusOp {
    Subscribe(SubscriptionId, Box<dyn Listener>),
    Unsubscribe(SubscriptionId),
}

/// What a listener may do while handling an event: read the frozen engine
/// state, and (un)subscribe listeners, effective from the next event.
pub struct ListenerContext<'a> {
    view: StateView<'a>,
    next_id: &'a mut u64,
    ops: &'a mut Vec<BusOp>,
}

impl<'a> ListenerContext<'a> {
    pub fn state(&self) -> StateView<'a> {
        self.view
    }

    pub fn subscribe(&mut self, listener: impl Listener + 'static) -> SubscriptionId {
        let id = SubscriptionId(*self.next_id);
        *self.next_id += 1;
        self.ops.push(BusOp::Subscribe(id, Box::new(listener)));
        id
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) {
        self.ops.push(BusOp::Unsubscribe(id));
    }
}

#[derive(Default)]
pub struct EventBus {
    listeners: Vec<(SubscriptionId, Box<dyn Listener>)>,
    next_id: u64,
    next_seq: u64,
}

impl EventBus {
    pub fn subscribe(&mut self, listener: impl Listener + 'static) -> SubscriptionId {
        let id = SubscriptionId(self.next_id);
        self.next_id += 1;
        self.listeners.push((id, Box::new(listener)));
        id
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) -> bool {
        let before = self.listeners.len();
        self.listeners.retain(|(l, _)| *l != id);
        self.listeners.len() != before
    }

    pub fn len(&self) -> usize {
        self.listeners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.listeners.is_empty()
    }

    /// Delivers `kind` to every listener in subscription order. The first
    /// listener error is returned after all listeners have seen the event.
    pub(crate) fn emit(&mut self, kind: EventKind, view: StateView<'_>) -> Result<(), EngineFault> {
        self.next_seq += 1;
        if self.listeners.is_empty() {
            return Ok(());
        }
        let event = Event { seq: self.next_seq, kind };
        let mut ops = Vec::new();
        let mut result = Ok(());
        let mut listeners = std::mem::take(&mut self.listeners);
        for (_, listener) in listeners.iter_mut() {
            let mut ctx = ListenerContext { view, next_id: &mut self.next_id, ops: &mut ops };
            if let Err(e) = listener.on_event(&event, &mut ctx) {
                if result.is_ok() {
                    result = Err(EngineFault::Listener(e.0));
                }
            }
        }
        // Listeners subscribed from outside during dispatch cannot exist,
        // so `self.listeners` is still empty here.
        self.listeners = listeners;
        for op in ops {
            match op {
                BusOp::Subscribe(id, l) => self.listeners.push((id, l)),
                BusOp::Unsubscribe(id) => self.listeners.retain(|(l, _)| *l != id),
            }
        }
        result
    }
}

impl fmt::Debug for EventBus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventBus")
            .field("listeners", &self.listeners.len())
            .field("next_seq", &self.next_seq)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Breakpoint {
    Rule(RuleId),
    Constraint(String),
    /// Pause at every dequeued goal fact.
    Step,
}

impl Breakpoint {
    pub fn matches(&self, event: &EventKind) -> bool {
        match self {
            Breakpoint::Rule(id) => matches!(event, EventKind::RuleFired(r) if r.rule == id.0),
            Breakpoint::Constraint(name) => event.facts().iter().any(|f| &*f.constraint == name),
            Breakpoint::Step => matches!(event, EventKind::Dequeued { .. }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BreakpointSet {
    items: Vec<Breakpoint>,
}

impl BreakpointSet {
    /// Returns false when the breakpoint was already present.
    pub fn add(&mut self, bp: Breakpoint) -> bool {
        if self.items.contains(&bp) {
            return false;
        }
        self.items.push(bp);
        true
    }

    pub fn remove(&mut self, bp: &Breakpoint) -> bool {
        let before = self.items.len();
        self.items.retain(|b| b != bp);
        self.items.len() != before
    }

    pub fn iter(&self) -> impl Iterator<Item = &Breakpoint> {
        self.items.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn should_pause(&self, event: &EventKind) -> bool {
        self.items.iter().any(|b| b.matches(event))
    }
}
