//! Objective backed by a worker process speaking the line protocol.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::protocol::{self, Request, Response, PROTOCOL_VERSION};
use super::Objective;
use crate::error::{Error, EvalError, Result};
use crate::space::{ConfigSpace, Configuration};

#[derive(Debug, Clone)]
pub struct ExternalOptions {
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(3600),
            max_in_flight: 1,
        }
    }
}

type Reply = std::result::Result<f64, EvalError>;

struct Shared {
    pending: Mutex<HashMap<u64, Sender<Reply>>>,
    alive: AtomicBool,
}

impl Shared {
    fn fail_all(&self, err: impl Fn(u64) -> EvalError) {
        let drained: Vec<_> = self.pending.lock().unwrap().drain().collect();
        for (id, tx) in drained {
            let _ = tx.send(Err(err(id)));
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

pub struct ExternalObjective {
    space: ConfigSpace,
    options: ExternalOptions,
    child: Mutex<Child>,
    stdin: Mutex<Option<ChildStdin>>,
    shared: Arc<Shared>,
    slots: Slots,
    next_id: AtomicU64,
    reader: Option<JoinHandle<()>>,
}

impl ExternalObjective {
    /// Spawns `command` through `sh -c` and sends the hello message.
    pub fn spawn(command: &str, space: ConfigSpace, options: ExternalOptions) -> Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command);
        Self::spawn_command(cmd, space, options)
    }

    pub fn spawn_command(
        mut cmd: Command,
        space: ConfigSpace,
        options: ExternalOptions,
    ) -> Result<Self> {
        if options.max_in_flight == 0 {
            return Err(Error::InvalidArgument(
                "max_in_flight must be at least 1".into(),
            ));
        }
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Worker(format!("failed to spawn worker: {e}")))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");

        let hello = Request::Hello {
            protocol_version: PROTOCOL_VERSION,
            space: space.to_doc(),
        };
        stdin
            .write_all(protocol::to_line(&hello).as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Worker(format!("failed to send hello: {e}")))?;

        let shared = Arc::new(Shared {
            pending: Mutex::new(HashMap::new()),
            alive: AtomicBool::new(true),
        });
        let reader_shared = Arc::clone(&shared);
        let reader = std::thread::Builder::new()
            .name("poca-worker-reader".into())
            .spawn(move || read_responses(BufReader::new(stdout), &reader_shared))?;

        Ok(Self {
            space,
            slots: Slots {
                free: Mutex::new(options.max_in_flight),
                cv: Condvar::new(),
            },
            options,
            child: Mutex::new(child),
            stdin: Mutex::new(Some(stdin)),
            shared,
            next_id: AtomicU64::new(0),
            reader: Some(reader),
        })
    }

    pub fn is_alive(&self) -> bool {
        self.shared.alive.load(Ordering::SeqCst)
    }

    fn request(&self, cfg: &Configuration, budget: u64, seed: u64) -> Reply {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let (tx, rx) = mpsc::channel();
        self.shared.pending.lock().unwrap().insert(id, tx);
        // The reader clears `alive` before draining, so either it drains our
        // entry or we observe the flag here.
        if !self.is_alive() {
            self.shared.pending.lock().unwrap().remove(&id);
            return Err(EvalError::Disconnected { id });
        }
        let line = protocol::to_line(&Request::Eval {
            id,
            config: self.space.to_json_map(cfg),
            budget,
            seed,
        });
        let written = match self.stdin.lock().unwrap().as_mut() {
            Some(w) => w.write_all(line.as_bytes()).and_then(|_| w.flush()).is_ok(),
            None => false,
        };
        if !written {
            self.shared.pending.lock().unwrap().remove(&id);
            return Err(EvalError::Disconnected { id });
        }
        match rx.recv_timeout(self.options.timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.shared.pending.lock().unwrap().remove(&id);
                Err(EvalError::Timeout { id })
            }
            Err(RecvTimeoutError::Disconnected) => Err(EvalError::Disconnected { id }),
        }
    }
}

fn read_responses<R: BufRead>(reader: R, shared: &Shared) {
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        match protocol::parse_response(&line) {
            Ok(resp) => {
                let id = resp.id();
                let reply = match resp {
                    Response::Result { loss, .. } => Ok(loss),
                    Response::Error { message, .. } => Err(EvalError::Worker { id, message }),
                };
                if let Some(tx) = shared.pending.lock().unwrap().remove(&id) {
                    let _ = tx.send(reply);
                }
            }
            Err(e) => {
                let msg = format!(
                    "malformed response `{}`: {e}",
                    line.chars().take(200).collect::<String>()
                );
                match protocol::salvage_id(&line) {
                    Some(id) => {
                        if let Some(tx) = shared.pending.lock().unwrap().remove(&id) {
                            let _ = tx.send(Err(EvalError::Protocol(msg)));
                        }
                    }
                    None => shared.fail_all(|_| EvalError::Protocol(msg.clone())),
                }
            }
        }
    }
    shared.alive.store(false, Ordering::SeqCst);
    shared.fail_all(|id| EvalError::Disconnected { id });
}

impl Objective for ExternalObjective {
    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn evaluate(
        &self,
        cfg: &Configuration,
        budget: u64,
        seed: u64,
    ) -> std::result::Result<f64, EvalError> {
        self.slots.acquire();
        let out = self.request(cfg, budget, seed);
        self.slots.release();
        out
    }
}

impl Drop for ExternalObjective {
    fn drop(&mut self) {
        if let Some(mut w) = self.stdin.lock().unwrap().take() {
            let _ = w.write_all(protocol::to_line(&Request::Shutdown).as_bytes());
            let _ = w.flush();
        }
        let mut child = self.child.lock().unwrap();
        let deadline = std::time::Instant::now() + Duration::from_secs(2);
        loop {
            match child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if std::time::Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(10))
                }
                _ => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break;
                }
            }
        }
        drop(child);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}
