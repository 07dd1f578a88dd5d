use std::fs::File;
use std::io::{self, BufRead, BufReader, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Parser;
use cr_core::solvers;

mod repl;

use repl::{Flow, Repl, ReplCommand};

/// Interactive shell for a bundled constraint rule handler.
#[derive(Parser, Debug)]
#[command(name = "cr", version)]
struct Args {
    /// Bundled handler to load.
    #[arg(long, default_value = solvers::ORDER_INTERVAL)]
    handler: String,
    /// Suspend a run once the goal grows past this many facts.
    #[arg(long)]
    limit: Option<usize>,
    /// Print one line per engine event.
    #[arg(long)]
    trace: bool,
    /// Start the debug server on this port.
    #[arg(long, value_name = "PORT")]
    serve: Option<u16>,
    /// Read commands from a file instead of standard input.
    #[arg(long, value_name = "FILE")]
    script: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match start(&args) {
        Ok((repl, input, interactive)) => {
            if let Err(e) = session(repl, input, interactive) {
                eprintln!("cr: {e:#}");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cr: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn start(args: &Args) -> anyhow::Result<(Repl, Box<dyn BufRead>, bool)> {
    let mut handler = solvers::by_name(&args.handler).ok_or_else(|| {
        anyhow!("unknown handler `{}` (available: {})", args.handler, solvers::HANDLERS.join(", "))
    })?;
    handler.set_goal_limit(args.limit);
    let (input, interactive): (Box<dyn BufRead>, bool) = match &args.script {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            (Box::new(BufReader::new(file)), false)
        }
        None => (Box::new(io::stdin().lock()), io::stdin().is_terminal()),
    };
    let mut repl = Repl::new(handler, args.trace);
    if let Some(port) = args.serve {
        let (_, lines) = repl.command(ReplCommand::Serve(Some(port)));
        if repl.serving().is_none() {
            return Err(anyhow!("{}", lines.join("; ").trim_start_matches("error: ")));
        }
        for line in lines {
            eprintln!("{line}");
        }
    }
    Ok((repl, input, interactive))
}

/// Reads commands until `quit` or end of input. Non-interactive input is
/// echoed so a transcript shows each command next to its output. When the
/// input ends while the debug server runs, keeps serving until killed.
fn session(mut repl: Repl, input: Box<dyn BufRead>, interactive: bool) -> anyhow::Result<()> {
    let mut stdout = io::stdout().lock();
    let mut lines = input.lines();
    loop {
        if interactive {
            write!(stdout, "cr> ")?;
            stdout.flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line.context("reading input")?;
        if !interactive && !line.trim().is_empty() {
            writeln!(stdout, "> {line}")?;
        }
        for pending in repl.drain_events() {
            writeln!(stdout, "{pending}")?;
        }
        let (flow, out) = repl.line(&line);
        for l in out {
            writeln!(stdout, "{l}")?;
        }
        stdout.flush()?;
        if flow == Flow::Quit {
            repl.finish(false);
            return Ok(());
        }
    }
    if let Some(addr) = repl.serving() {
        eprintln!("input closed; still serving on {addr}");
        repl.finish(true);
    }
    Ok(())
}
