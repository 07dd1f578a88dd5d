use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use cr_core::server::{serve, DEFAULT_PORT};
use cr_core::solvers::order_interval;
use cr_core::wire::ServerMessage;

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: std::net::SocketAddr) -> Client {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        Client { reader: BufReader::new(stream.try_clone().unwrap()), writer: stream }
    }

    fn send(&mut self, line: &str) {
        writeln!(self.writer, "{line}").unwrap();
    }

    fn recv(&mut self) -> String {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        line.trim_end().to_string()
    }

    /// Reads lines up to and including the reply with `id`.
    fn until_reply(&mut self, id: u32) -> Vec<String> {
        let tag = format!(r#"{{"type":"reply","id":{id},"#);
        let mut lines = Vec::new();
        loop {
            let line = self.recv();
            assert!(!line.is_empty(), "connection closed");
            let done = line.starts_with(&tag);
            lines.push(line);
            if done {
                return lines;
            }
        }
    }
}

const TELL_X_0_10: &str = r#"{"id":1,"cmd":"tell","constraint":"dom","key":[{"t":"s","v":"x"}],"data":[{"t":"i","v":"0"},{"t":"i","v":"10"}]}"#;
const TELL_X_3_15: &str = r#"{"id":2,"cmd":"tell","constraint":"dom","key":[{"t":"s","v":"x"}],"data":[{"t":"i","v":"3"},{"t":"i","v":"15"}]}"#;

#[test]
fn default_port() {
    assert_eq!(DEFAULT_PORT, 7454);
}

#[test]
fn hello_events_and_replies() {
    let server = serve(order_interval(), "127.0.0.1:0").unwrap();
    let mut a = Client::connect(server.local_addr());
    let hello = a.recv();
    match ServerMessage::from_line(&hello).unwrap() {
        ServerMessage::Hello { handler, constraints, rules } => {
            assert_eq!(handler, "order-interval");
            assert_eq!(constraints.len(), 5);
            assert_eq!(rules.len(), 11);
        }
        other => panic!("{other:?}"),
    }
    let mut b = Client::connect(server.local_addr());
    b.recv();

    a.send(TELL_X_0_10);
    let lines = a.until_reply(1);
    assert_eq!(lines.last().unwrap(), r#"{"type":"reply","id":1,"ok":true,"data":{"outcome":"fixpoint"}}"#);
    let events_a = &lines[..lines.len() - 1];
    let events_b: Vec<String> = (0..events_a.len()).map(|_| b.recv()).collect();
    assert_eq!(events_a, &events_b[..]);

    a.send(TELL_X_3_15);
    a.until_reply(2);
    b.send(r#"{"id":9,"cmd":"select","constraint":"dom"}"#);
    let lines = b.until_reply(9);
    assert_eq!(
        lines.last().unwrap(),
        r#"{"type":"reply","id":9,"ok":true,"data":{"facts":[{"constraint":"dom","key":[{"t":"s","v":"x"}],"data":[{"t":"i","v":"3"},{"t":"i","v":"10"}]}]}}"#
    );

    a.send("this is not json");
    assert_eq!(a.recv(), r#"{"type":"reply","id":null,"ok":false,"error":"parse"}"#);
    a.send(r#"{"id":3,"cmd":"rollback"}"#);
    assert_eq!(a.recv(), r#"{"type":"reply","id":3,"ok":false,"error":"no-open-transaction"}"#);

    let handler = server.shutdown();
    assert_eq!(handler.select("dom").unwrap().len(), 1);
}

#[test]
fn breakpoint_pause_and_continue() {
    let server = serve(order_interval(), "127.0.0.1:0").unwrap();
    let mut runner = Client::connect(server.local_addr());
    let mut debugger = Client::connect(server.local_addr());
    runner.recv();
    debugger.recv();

    debugger.send(r#"{"id":1,"cmd":"breakpoint.add","rule":5}"#);
    assert_eq!(debugger.recv(), r#"{"type":"reply","id":1,"ok":true,"data":{"added":true}}"#);
    runner.send(r#"{"id":2,"cmd":"tell","constraint":"leq","key":[{"t":"s","v":"a"},{"t":"s","v":"b"}]}"#);
    runner.until_reply(2);
    runner.send(r#"{"id":3,"cmd":"tell","constraint":"leq","key":[{"t":"s","v":"b"},{"t":"s","v":"a"}]}"#);

    // the debugger sees the events up to the pause
    let mut seen = Vec::new();
    loop {
        let line = debugger.recv();
        let paused = line.starts_with(r#"{"type":"paused""#);
        seen.push(line);
        if paused {
            break;
        }
    }
    assert!(seen[seen.len() - 2].contains(r#""kind":"rule_fired","rule":5"#), "{seen:?}");

    debugger.send(r#"{"id":4,"cmd":"select","constraint":"leq"}"#);
    let reply = debugger.recv();
    assert!(reply.starts_with(r#"{"type":"reply","id":4,"ok":true,"data":{"facts":[{"constraint":"leq""#), "{reply}");
    debugger.send(r#"{"id":5,"cmd":"tell","constraint":"leq","key":[{"t":"s","v":"c"},{"t":"s","v":"d"}]}"#);
    assert_eq!(debugger.recv(), r#"{"type":"reply","id":5,"ok":false,"error":"busy"}"#);
    debugger.send(r#"{"id":6,"cmd":"continue"}"#);
    assert_eq!(debugger.recv(), r#"{"type":"reply","id":6,"ok":true,"data":{}}"#);

    let lines = runner.until_reply(3);
    assert_eq!(lines.last().unwrap(), r#"{"type":"reply","id":3,"ok":true,"data":{"outcome":"fixpoint"}}"#);
    let handler = server.shutdown();
    assert_eq!(handler.facts().len(), 2);
}

#[test]
fn shutdown_releases_a_paused_engine() {
    let server = serve(order_interval(), "127.0.0.1:0").unwrap();
    let mut c = Client::connect(server.local_addr());
    c.recv();
    c.send(r#"{"id":1,"cmd":"breakpoint.add","step":true}"#);
    c.recv();
    c.send(TELL_X_0_10);
    loop {
        if c.recv().starts_with(r#"{"type":"paused""#) {
            break;
        }
    }
    let handler = server.shutdown();
    assert_eq!(handler.select("dom").unwrap().len(), 1);
}

#[test]
fn local_client_shares_the_stream() {
    use cr_core::wire::{Command, Request};
    use cr_core::Value;

    let server = serve(order_interval(), "127.0.0.1:0").unwrap();
    let mut remote = Client::connect(server.local_addr());
    remote.recv();
    let local = server.local_client();
    let tell = Request::new(
        7,
        Command::Tell { constraint: "dom".into(), key: vec![Value::from("x")], data: vec![Value::Int(1), Value::Int(2)] },
    );
    let (events, reply) = local.call(&tell).unwrap();
    assert!(reply.ok);
    assert_eq!(events.len(), 4);
    let remote_lines: Vec<String> = (0..4).map(|_| remote.recv()).collect();
    let local_lines: Vec<String> = events.iter().map(|e| e.to_line()).collect();
    assert_eq!(remote_lines, local_lines);

    remote.send(r#"{"id":1,"cmd":"run"}"#);
    assert_eq!(remote.until_reply(1).last().unwrap(), r#"{"type":"reply","id":1,"ok":true,"data":{"outcome":"fixpoint"}}"#);
    drop(local);
    assert_eq!(server.shutdown().facts().len(), 1);
}
