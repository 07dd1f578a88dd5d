//! Executes wire commands against one handler and implements breakpoint
//! pauses. Transport-agnostic: lines come in through a channel and go out
//! through an [`Outbox`].

use std::sync::mpsc::{Receiver, Sender};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value as Json};

use crate::engine::{Handler, RunOutcome, StateView};
use crate::error::EngineError;
use crate::events::{Breakpoint, BreakpointSet, Event, EventKind, ListenerContext, SubscriptionId};
use crate::fact::Fact;
use crate::rule::RuleId;
use crate::wire::{BreakpointWire, Command, KeyPattern, Reply, Request, ServerMessage};

/// A client line together with the channel its reply is sent to.
pub struct Envelope {
    pub line: String,
    pub reply: Sender<String>,
}

/// Fan-out of server lines to every connected client.
#[derive(Default)]
pub struct Outbox {
    clients: Mutex<Vec<(u64, Sender<String>)>>,
}

impl Outbox {
    pub fn add(&self, id: u64, tx: Sender<String>) {
        self.clients.lock().unwrap().push((id, tx));
    }

    pub fn remove(&self, id: u64) {
        self.clients.lock().unwrap().retain(|(c, _)| *c != id);
    }

    pub fn broadcast(&self, line: &str) {
        self.clients.lock().unwrap().retain(|(_, tx)| tx.send(line.to_string()).is_ok());
    }
}

#[derive(Default)]
struct DebugState {
    breakpoints: BreakpointSet,
    /// Pause at the next dequeued fact.
    step: bool,
}

struct Shared {
    debug: Mutex<DebugState>,
    inbox: Mutex<Receiver<Envelope>>,
    outbox: Arc<Outbox>,
}

pub struct Session {
    handler: Handler,
    shared: Arc<Shared>,
    bridge: SubscriptionId,
}

impl Session {
    /// Wraps `handler`, forwarding its events to `outbox`. Commands that
    /// arrive on `inbox` while paused at a breakpoint are served from
    /// inside the run.
    pub fn new(mut handler: Handler, inbox: Receiver<Envelope>, outbox: Arc<Outbox>) -> Self {
        let shared = Arc::new(Shared { debug: Mutex::default(), inbox: Mutex::new(inbox), outbox });
        let outbound = shared.clone();
        let bridge = handler.subscribe(move |event: &Event, ctx: &mut ListenerContext<'_>| {
            outbound.outbox.broadcast(&ServerMessage::event(event).to_line());
            if outbound.should_pause(&event.kind) {
                outbound.pause(event.seq, ctx.state());
            }
            Ok(())
        });
        Session { handler, shared, bridge }
    }

    pub fn handler(&self) -> &Handler {
        &self.handler
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::hello(self.handler.program())
    }

    /// Detaches the bridging listener and returns the handler.
    pub fn into_handler(mut self) -> Handler {
        self.handler.unsubscribe(self.bridge).expect("bridge is subscribed");
        self.handler
    }

    /// Serves the inbox until every sender is gone, then hands the handler back.
    pub fn run(mut self) -> Handler {
        loop {
            let next = self.shared.inbox.lock().unwrap().recv();
            let Ok(envelope) = next else { break };
            let reply = self.handle_line(&envelope.line);
            let _ = envelope.reply.send(ServerMessage::Reply(reply).to_line());
        }
        self.into_handler()
    }

    pub fn handle_line(&mut self, line: &str) -> Reply {
        match Request::parse(line) {
            Ok(req) => self.execute(req),
            Err(reply) => *reply,
        }
    }

    pub fn execute(&mut self, req: Request) -> Reply {
        let id = req.id;
        match self.command(req.command) {
            Ok(data) => Reply::ok(id, data),
            Err(code) => Reply::err(id, code),
        }
    }

    fn command(&mut self, cmd: Command) -> Result<Json, String> {
        let h = &mut self.handler;
        match cmd {
            Command::Tell { constraint, key, data } => outcome(h.tell(Fact::new(constraint.as_str(), key, data))),
            Command::Select { constraint, key } => select(h.view(), &constraint, key),
            Command::Begin => depth(h.begin()),
            Command::Commit => depth(h.commit()),
            Command::PartialCommit => depth(h.partial_commit()),
            Command::Rollback => depth(h.rollback()),
            Command::Resume => outcome(h.resume()),
            Command::Run => outcome(h.run()),
            Command::Limit { n } => {
                h.set_goal_limit(n);
                Ok(json!({ "limit": n }))
            }
            Command::Continue | Command::Step => Err("not-paused".into()),
            cmd => self.shared.breakpoint_command(self.handler.view(), cmd),
        }
    }
}

impl Shared {
    fn should_pause(&self, kind: &EventKind) -> bool {
        let mut debug = self.debug.lock().unwrap();
        let stepping = debug.step && matches!(kind, EventKind::Dequeued { .. });
        if stepping {
            debug.step = false;
        }
        stepping || debug.breakpoints.should_pause(kind)
    }

    /// Blocks the engine thread, serving commands against the frozen state
    /// until a client sends `continue` or `step`.
    fn pause(&self, seq: u64, view: StateView<'_>) {
        self.outbox.broadcast(&ServerMessage::Paused { seq }.to_line());
        loop {
            let next = self.inbox.lock().unwrap().recv();
            let Ok(envelope) = next else { return };
            let (reply, release) = match Request::parse(&envelope.line) {
                Ok(req) => {
                    let release = matches!(req.command, Command::Continue | Command::Step);
                    let result = match req.command {
                        Command::Continue => Ok(json!({})),
                        Command::Step => {
                            self.debug.lock().unwrap().step = true;
                            Ok(json!({}))
                        }
                        Command::Select { constraint, key } => select(view, &constraint, key),
                        Command::Begin => Err(EngineError::BeginDuringRun.code().to_string()),
                        cmd @ (Command::BreakpointAdd(_) | Command::BreakpointRemove(_) | Command::BreakpointList) => {
                            self.breakpoint_command(view, cmd)
                        }
                        _ => Err("busy".to_string()),
                    };
                    let reply = match result {
                        Ok(data) => Reply::ok(req.id, data),
                        Err(code) => Reply::err(req.id, code),
                    };
                    (reply, release)
                }
                Err(reply) => (*reply, false),
            };
            let _ = envelope.reply.send(ServerMessage::Reply(reply).to_line());
            if release {
                return;
            }
        }
    }

    fn breakpoint_command(&self, view: StateView<'_>, cmd: Command) -> Result<Json, String> {
        let mut debug = self.debug.lock().unwrap();
        match cmd {
            Command::BreakpointAdd(bp) => Ok(json!({ "added": debug.breakpoints.add(checked(view, &bp)?) })),
            Command::BreakpointRemove(bp) => Ok(json!({ "removed": debug.breakpoints.remove(&checked(view, &bp)?) })),
            Command::BreakpointList => {
                let list: Vec<BreakpointWire> = debug.breakpoints.iter().map(BreakpointWire::from).collect();
                Ok(json!({ "breakpoints": list }))
            }
            _ => unreachable!("not a breakpoint command"),
        }
    }
}

fn checked(view: StateView<'_>, bp: &BreakpointWire) -> Result<Breakpoint, String> {
    let bp = bp.to_breakpoint().ok_or("parse")?;
    match &bp {
        Breakpoint::Rule(RuleId(r)) if *r as usize > view.program().rules().len() => Err("unknown-rule".into()),
        Breakpoint::Constraint(c) if view.program().constraint_id(c).is_none() => {
            Err(EngineError::UnknownConstraint(c.clone()).code().into())
        }
        _ => Ok(bp),
    }
}

fn outcome(result: Result<RunOutcome, EngineError>) -> Result<Json, String> {
    result.map(|o| json!({ "outcome": o.name() })).map_err(|e| e.code().to_string())
}

fn depth(result: Result<usize, EngineError>) -> Result<Json, String> {
    result.map(|d| json!({ "depth": d })).map_err(|e| e.code().to_string())
}

fn select(view: StateView<'_>, constraint: &str, key: Option<Vec<KeyPattern>>) -> Result<Json, String> {
    let pattern: Option<Vec<_>> = key.map(|k| k.into_iter().map(|p| p.0).collect());
    let facts = view.select_matching(constraint, pattern.as_deref()).map_err(|e| e.code().to_string())?;
    Ok(json!({ "facts": facts }))
}
