//! Reference worker for the evaluation protocol.
//!
//! Replies to every `eval` with the value of the first continuous parameter.
//!
//!   --shuffle K     buffer up to K requests and answer them in reverse
//!                   order; a partial buffer is answered once input idles
//!   --die-after N   exit without replying when the N-th request arrives

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::time::Duration;

use poca::objective::protocol::{self, Request, Response};
use poca::space::{Kind, SpaceDoc};

fn first_continuous(space: &SpaceDoc) -> Option<String> {
    space
        .params
        .iter()
        .find(|p| p.kind == Kind::Continuous)
        .map(|p| p.name.clone())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flag = |name: &str| -> Option<usize> {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
    };
    let shuffle = flag("--shuffle").unwrap_or(1).max(1);
    let die_after = flag("--die-after");

    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut target: Option<String> = None;
    let mut buffered: Vec<Response> = Vec::new();
    let mut received = 0usize;

    let flush = |buffered: &mut Vec<Response>, out: &mut io::StdoutLock<'_>| -> io::Result<()> {
        for r in buffered.drain(..).rev() {
            out.write_all(protocol::to_line(&r).as_bytes())?;
        }
        out.flush()
    };

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in stdin.lock().lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    loop {
        let line = match rx.recv_timeout(Duration::from_millis(50)) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                if flush(&mut buffered, &mut out).is_err() {
                    return ExitCode::from(1);
                }
                continue;
            }
            Err(RecvTimeoutError::Disconnected) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let req = match protocol::parse_request(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("echo-worker: bad request: {e}");
                return ExitCode::from(2);
            }
        };
        match req {
            Request::Hello { space, .. } => target = first_continuous(&space),
            Request::Shutdown => break,
            Request::Eval { id, config, .. } => {
                received += 1;
                if die_after == Some(received) {
                    return ExitCode::from(1);
                }
                let value = target
                    .as_ref()
                    .and_then(|t| config.get(t))
                    .and_then(|v| v.as_f64());
                buffered.push(match value {
                    Some(loss) => Response::Result { id, loss },
                    None => Response::Error {
                        id,
                        message: "no active continuous parameter".into(),
                    },
                });
                if buffered.len() >= shuffle && flush(&mut buffered, &mut out).is_err() {
                    return ExitCode::from(1);
                }
            }
        }
    }
    let _ = flush(&mut buffered, &mut out);
    ExitCode::SUCCESS
}
