//! TCP transport for [`Session`]: newline-delimited JSON, one engine thread,
//! one reader and one writer thread per client.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crate::engine::Handler;
use crate::session::{Envelope, Outbox, Session};
use crate::wire::{Reply, Request, ServerMessage};

pub const DEFAULT_PORT: u16 = 7454;
pub const PORT_ENV: &str = "CR_DEBUG_PORT";

/// `CR_DEBUG_PORT` when set to a valid port, else the default.
pub fn port_from_env() -> u16 {
    std::env::var(PORT_ENV).ok().and_then(|p| p.parse().ok()).unwrap_or(DEFAULT_PORT)
}

pub struct ServerHandle {
    addr: SocketAddr,
    inbox: Sender<Envelope>,
    outbox: Arc<Outbox>,
    next_client: Arc<AtomicU64>,
    stopping: Arc<AtomicBool>,
    clients: Arc<Mutex<Vec<TcpStream>>>,
    accept: JoinHandle<()>,
    engine: JoinHandle<Handler>,
}

/// Starts serving `handler` on `addr`. Every client first receives a hello
/// line, then the shared event stream and replies to its own commands.
pub fn serve(handler: Handler, addr: impl ToSocketAddrs) -> io::Result<ServerHandle> {
    serve_on(handler, TcpListener::bind(addr)?)
}

/// Like [`serve`] on an already bound listener.
pub fn serve_on(handler: Handler, listener: TcpListener) -> io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let (inbox_tx, inbox_rx) = channel();
    let outbox = Arc::new(Outbox::default());
    let session = Session::new(handler, inbox_rx, outbox.clone());
    let hello = session.hello().to_line();
    let engine = thread::Builder::new().name("cr-engine".into()).spawn(move || session.run())?;

    let stopping = Arc::new(AtomicBool::new(false));
    let clients = Arc::new(Mutex::new(Vec::new()));
    let next_client = Arc::new(AtomicU64::new(0));
    let accept = {
        let (stopping, clients, next_client) = (stopping.clone(), clients.clone(), next_client.clone());
        let (outbox, inbox_tx) = (outbox.clone(), inbox_tx.clone());
        thread::Builder::new().name("cr-accept".into()).spawn(move || {
            for stream in listener.incoming() {
                if stopping.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                if let Ok(clone) = stream.try_clone() {
                    clients.lock().unwrap().push(clone);
                }
                let id = next_client.fetch_add(1, Ordering::SeqCst);
                let _ = attach(id, stream, &hello, &outbox, inbox_tx.clone());
            }
        })?
    };
    Ok(ServerHandle { addr, inbox: inbox_tx, outbox, next_client, stopping, clients, accept, engine })
}

fn attach(id: u64, stream: TcpStream, hello: &str, outbox: &Arc<Outbox>, inbox: Sender<Envelope>) -> io::Result<()> {
    let _ = stream.set_nodelay(true);
    let (tx, rx) = channel::<String>();
    tx.send(hello.to_string()).expect("receiver alive");
    outbox.add(id, tx.clone());

    let mut writer = stream.try_clone()?;
    thread::spawn(move || {
        for line in rx {
            if writeln!(writer, "{line}").and_then(|_| writer.flush()).is_err() {
                break;
            }
        }
    });

    let outbox = outbox.clone();
    thread::spawn(move || {
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            if inbox.send(Envelope { line, reply: tx.clone() }).is_err() {
                break;
            }
        }
        outbox.remove(id);
    });
    Ok(())
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// An in-process client sharing the event stream with network clients.
    /// Drop it before [`shutdown`](Self::shutdown).
    pub fn local_client(&self) -> LocalClient {
        let id = self.next_client.fetch_add(1, Ordering::SeqCst);
        let (tx, rx) = channel();
        self.outbox.add(id, tx.clone());
        LocalClient { id, inbox: self.inbox.clone(), outbox: self.outbox.clone(), tx, rx }
    }

    /// Blocks until the server stops.
    pub fn wait(self) -> Handler {
        drop(self.inbox);
        let _ = self.accept.join();
        self.engine.join().expect("engine thread panicked")
    }

    /// Disconnects every client, stops accepting and returns the handler.
    pub fn shutdown(self) -> Handler {
        drop(self.inbox);
        self.stopping.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        let _ = self.accept.join();
        for client in self.clients.lock().unwrap().drain(..) {
            let _ = client.shutdown(Shutdown::Both);
        }
        self.engine.join().expect("engine thread panicked")
    }
}

pub struct LocalClient {
    id: u64,
    inbox: Sender<Envelope>,
    outbox: Arc<Outbox>,
    tx: Sender<String>,
    rx: Receiver<String>,
}

impl LocalClient {
    /// Sends one request and waits for its reply. Returns every event
    /// broadcast in the meantime together with the reply.
    pub fn call(&self, req: &Request) -> io::Result<(Vec<ServerMessage>, Reply)> {
        let gone = || io::Error::new(io::ErrorKind::BrokenPipe, "server stopped");
        self.inbox.send(Envelope { line: req.to_line(), reply: self.tx.clone() }).map_err(|_| gone())?;
        let mut seen = Vec::new();
        loop {
            let line = self.rx.recv().map_err(|_| gone())?;
            match ServerMessage::from_line(&line) {
                Ok(ServerMessage::Reply(reply)) if reply.id == req.id => return Ok((seen, reply)),
                Ok(msg) => seen.push(msg),
                Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e)),
            }
        }
    }

    /// Messages broadcast since the last call, without blocking.
    pub fn drain(&self) -> Vec<ServerMessage> {
        self.rx.try_iter().filter_map(|l| ServerMessage::from_line(&l).ok()).collect()
    }
}

impl Drop for LocalClient {
    fn drop(&mut self) {
        self.outbox.remove(self.id);
    }
}
