//! Line-oriented command interpreter over one handler. Commands go through
//! a [`Session`] in-process, or through the debug server once `serve` runs,
//! so both paths share one event stream and one reply format.

use std::net::{SocketAddr, TcpListener};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;

use cr_core::server::{port_from_env, serve_on, LocalClient, ServerHandle};
use cr_core::session::{Envelope, Outbox, Session};
use cr_core::wire::{Command, KeyPattern, Reply, Request, ServerMessage};
use cr_core::{Event, Fact, Handler, Program, Value};
use serde_json::Value as Json;

pub const HELP: &[&str] = &[
    "tell <constraint> <value>*          add a fact, key values first, and run",
    "select <constraint> [<value>|_]*    list stored facts, optionally filtered by key",
    "run                                 run the main loop on the current goal",
    "resume                              continue a suspended run",
    "begin | commit | partial | rollback transaction control",
    "limit <n|off>                       set or clear the goal limit",
    "trace on|off                        print one line per engine event",
    "serve [port]                        start the debug server",
    "help                                show this list",
    "quit                                leave",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ReplCommand {
    Tell { constraint: String, values: Vec<Value> },
    Select { constraint: String, pattern: Option<Vec<Option<Value>>> },
    Run,
    Resume,
    Begin,
    Commit,
    Partial,
    Rollback,
    Limit(Option<usize>),
    Trace(bool),
    Serve(Option<u16>),
    Help,
    Quit,
}

/// Splits a line on whitespace, keeping double-quoted strings (with their
/// escapes) as single tokens.
pub fn tokenize(line: &str) -> Result<Vec<&str>, String> {
    let mut tokens = Vec::new();
    let mut rest = line.trim_start();
    while !rest.is_empty() {
        let end = if rest.starts_with('"') {
            let mut escaped = false;
            let close = rest.char_indices().skip(1).find(|&(_, c)| {
                let close = c == '"' && !escaped;
                escaped = c == '\\' && !escaped;
                close
            });
            match close {
                Some((i, _)) => i + 1,
                None => return Err("unterminated string".into()),
            }
        } else {
            rest.find(char::is_whitespace).unwrap_or(rest.len())
        };
        tokens.push(&rest[..end]);
        rest = rest[end..].trim_start();
    }
    Ok(tokens)
}

fn value(token: &str) -> Result<Value, String> {
    token.parse().map_err(|_| format!("bad value `{token}`"))
}

/// Parses one line. Blank lines and `#` comments yield `None`.
pub fn parse(line: &str) -> Result<Option<ReplCommand>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let tokens = tokenize(line)?;
    let (&head, args) = tokens.split_first().expect("line is not blank");
    let no_args = |cmd: ReplCommand| match args {
        [] => Ok(cmd),
        _ => Err(format!("`{head}` takes no arguments")),
    };
    let cmd = match head {
        "tell" | "select" => {
            let (&constraint, values) = args.split_first().ok_or_else(|| format!("`{head}` needs a constraint"))?;
            let constraint = constraint.to_string();
            if head == "tell" {
                ReplCommand::Tell { constraint, values: values.iter().map(|t| value(t)).collect::<Result<_, _>>()? }
            } else {
                let pattern = values
                    .iter()
                    .map(|&t| if t == "_" { Ok(None) } else { value(t).map(Some) })
                    .collect::<Result<Vec<_>, _>>()?;
                ReplCommand::Select { constraint, pattern: (!pattern.is_empty()).then_some(pattern) }
            }
        }
        "run" => no_args(ReplCommand::Run)?,
        "resume" => no_args(ReplCommand::Resume)?,
        "begin" => no_args(ReplCommand::Begin)?,
        "commit" => no_args(ReplCommand::Commit)?,
        "partial" => no_args(ReplCommand::Partial)?,
        "rollback" => no_args(ReplCommand::Rollback)?,
        "help" => no_args(ReplCommand::Help)?,
        "quit" | "exit" => no_args(ReplCommand::Quit)?,
        "limit" => match args {
            ["off"] => ReplCommand::Limit(None),
            [n] => ReplCommand::Limit(Some(n.parse().map_err(|_| format!("bad limit `{n}`"))?)),
            _ => return Err("usage: limit <n|off>".into()),
        },
        "trace" => match args {
            ["on"] => ReplCommand::Trace(true),
            ["off"] => ReplCommand::Trace(false),
            _ => return Err("usage: trace on|off".into()),
        },
        "serve" => match args {
            [] => ReplCommand::Serve(None),
            [p] => ReplCommand::Serve(Some(p.parse().map_err(|_| format!("bad port `{p}`"))?)),
            _ => return Err("usage: serve [port]".into()),
        },
        other => return Err(format!("unknown command `{other}`")),
    };
    Ok(Some(cmd))
}

enum Backend {
    Local { session: Session, events: Receiver<String>, _inbox: Sender<Envelope> },
    Served { client: LocalClient, server: ServerHandle },
}

pub struct Repl {
    backend: Option<Backend>,
    program: Arc<Program>,
    trace: bool,
    next_id: u64,
}

/// What the caller should do after a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Quit,
}

impl Repl {
    pub fn new(handler: Handler, trace: bool) -> Self {
        let program = handler.shared_program();
        Repl { backend: Some(local(handler)), program, trace, next_id: 1 }
    }

    pub fn serving(&self) -> Option<SocketAddr> {
        match &self.backend {
            Some(Backend::Served { server, .. }) => Some(server.local_addr()),
            _ => None,
        }
    }

    /// Runs one input line and returns the lines to print.
    pub fn line(&mut self, line: &str) -> (Flow, Vec<String>) {
        match parse(line) {
            Ok(None) => (Flow::Continue, Vec::new()),
            Ok(Some(cmd)) => self.command(cmd),
            Err(e) => (Flow::Continue, vec![format!("error: parse: {e}")]),
        }
    }

    pub fn command(&mut self, cmd: ReplCommand) -> (Flow, Vec<String>) {
        let mut out = Vec::new();
        let command = match cmd {
            ReplCommand::Quit => return (Flow::Quit, out),
            ReplCommand::Help => {
                out.extend(HELP.iter().map(|l| l.to_string()));
                return (Flow::Continue, out);
            }
            ReplCommand::Trace(on) => {
                self.trace = on;
                out.push(format!("trace: {}", if on { "on" } else { "off" }));
                return (Flow::Continue, out);
            }
            ReplCommand::Serve(port) => {
                out.push(match self.serve(port) {
                    Ok(addr) => format!("serving on {addr}"),
                    Err(e) => format!("error: {e}"),
                });
                return (Flow::Continue, out);
            }
            ReplCommand::Tell { constraint, values } => match self.split(&constraint, values) {
                Ok((key, data)) => Command::Tell { constraint, key, data },
                Err(code) => {
                    out.push(format!("error: {code}"));
                    return (Flow::Continue, out);
                }
            },
            ReplCommand::Select { constraint, pattern } => Command::Select {
                constraint,
                key: pattern.map(|p| p.into_iter().map(KeyPattern).collect()),
            },
            ReplCommand::Run => Command::Run,
            ReplCommand::Resume => Command::Resume,
            ReplCommand::Begin => Command::Begin,
            ReplCommand::Commit => Command::Commit,
            ReplCommand::Partial => Command::PartialCommit,
            ReplCommand::Rollback => Command::Rollback,
            ReplCommand::Limit(n) => Command::Limit { n },
        };
        let (events, reply) = self.call(command);
        if self.trace {
            out.extend(events.iter().filter_map(render_event));
        }
        match reply {
            Ok(reply) => out.extend(render_reply(&reply)),
            Err(e) => out.push(format!("error: {e}")),
        }
        (Flow::Continue, out)
    }

    /// Splits tell arguments into key and data by the declared key arity.
    fn split(&self, constraint: &str, mut values: Vec<Value>) -> Result<(Vec<Value>, Vec<Value>), &'static str> {
        let id = self.program.constraint_id(constraint).ok_or("unknown-constraint")?;
        let sig = self.program.signature(id);
        if values.len() != sig.key.len() + sig.data.len() {
            return Err("arity-mismatch");
        }
        let data = values.split_off(sig.key.len());
        Ok((values, data))
    }

    fn call(&mut self, command: Command) -> (Vec<ServerMessage>, Result<Reply, String>) {
        let req = Request::new(self.next_id, command);
        self.next_id += 1;
        match self.backend.as_mut().expect("backend present") {
            Backend::Local { session, events, .. } => {
                let reply = session.execute(req);
                let seen = events.try_iter().filter_map(|l| ServerMessage::from_line(&l).ok()).collect();
                (seen, Ok(reply))
            }
            Backend::Served { client, .. } => match client.call(&req) {
                Ok((seen, reply)) => (seen, Ok(reply)),
                Err(e) => (Vec::new(), Err(e.to_string())),
            },
        }
    }

    fn serve(&mut self, port: Option<u16>) -> Result<SocketAddr, String> {
        if self.serving().is_some() {
            return Err("already-serving".into());
        }
        let port = port.unwrap_or_else(port_from_env);
        let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| format!("cannot bind port {port}: {e}"))?;
        let Some(Backend::Local { session, .. }) = self.backend.take() else { unreachable!("checked above") };
        let server = serve_on(session.into_handler(), listener).map_err(|e| e.to_string())?;
        let addr = server.local_addr();
        self.backend = Some(Backend::Served { client: server.local_client(), server });
        Ok(addr)
    }

    /// Stops the server if one runs and returns the handler.
    pub fn finish(mut self, wait: bool) -> Handler {
        match self.backend.take().expect("backend present") {
            Backend::Local { session, .. } => session.into_handler(),
            Backend::Served { client, server } => {
                drop(client);
                if wait {
                    server.wait()
                } else {
                    server.shutdown()
                }
            }
        }
    }

    pub fn drain_events(&self) -> Vec<String> {
        match (&self.backend, self.trace) {
            (Some(Backend::Served { client, .. }), true) => client.drain().iter().filter_map(render_event).collect(),
            (Some(Backend::Served { client, .. }), false) => {
                client.drain();
                Vec::new()
            }
            _ => Vec::new(),
        }
    }
}

fn local(handler: Handler) -> Backend {
    let (inbox, inbox_rx) = channel();
    let (events_tx, events) = channel();
    let outbox = Arc::new(Outbox::default());
    outbox.add(0, events_tx);
    Backend::Local { session: Session::new(handler, inbox_rx, outbox), events, _inbox: inbox }
}

fn render_event(msg: &ServerMessage) -> Option<String> {
    match msg {
        ServerMessage::Event { seq, event } => Some(Event { seq: *seq, kind: event.clone() }.to_string()),
        ServerMessage::Paused { seq } => Some(format!("paused at #{seq}")),
        _ => None,
    }
}

fn render_reply(reply: &Reply) -> Vec<String> {
    if !reply.ok {
        return vec![format!("error: {}", reply.error.as_deref().unwrap_or("unknown"))];
    }
    let data = reply.data.as_ref().unwrap_or(&Json::Null);
    if let Some(outcome) = data.get("outcome").and_then(Json::as_str) {
        return vec![format!("outcome: {outcome}")];
    }
    if let Some(depth) = data.get("depth") {
        return vec![format!("depth: {depth}")];
    }
    if let Some(limit) = data.get("limit") {
        return vec![format!("limit: {}", if limit.is_null() { "off".to_string() } else { limit.to_string() })];
    }
    if let Some(facts) = data.get("facts") {
        let facts: Vec<Fact> = serde_json::from_value(facts.clone()).unwrap_or_default();
        if facts.is_empty() {
            return vec!["(no facts)".into()];
        }
        return facts.iter().map(Fact::to_string).collect();
    }
    vec![data.to_string()]
}
