//! Client side of the external head protocol.
//!
//! The adapter is a child process speaking newline-delimited JSON on its
//! standard streams. It opens with `{"type":"hello","p":P,"c":C}`; each request
//! `{"type":"eval","id":N,"activations":[[..],..]}` is answered by
//! `{"type":"result","id":N,"logits":[[..],..]}`, possibly out of order. An
//! adapter may also answer `{"type":"error","id":N,"message":".."}`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_BATCH_SIZE: usize = 256;

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Incoming {
    Hello {
        p: usize,
        c: usize,
    },
    Result {
        id: u64,
        logits: Vec<Vec<f64>>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

#[derive(Serialize)]
struct EvalRequest<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    id: u64,
    activations: &'a [Vec<f64>],
}

fn protocol(id: Option<u64>, message: impl Into<String>) -> Error {
    Error::Protocol {
        id,
        message: message.into(),
    }
}

/// A live connection to one adapter process.
pub struct HeadSession {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    input_dim: usize,
    classes: usize,
    next_id: u64,
    timeout: Duration,
    failed: bool,
}

impl std::fmt::Debug for HeadSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HeadSession")
            .field("pid", &self.child.id())
            .field("input_dim", &self.input_dim)
            .field("classes", &self.classes)
            .finish()
    }
}

impl HeadSession {
    /// Starts `command[0]` with the remaining arguments and waits for the
    /// handshake. `expected_dim`, when given, must match the advertised `p`.
    pub fn spawn(command: &[String], expected_dim: Option<usize>, timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::invalid("external head command is empty"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::file(program, e))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut session = Self {
            child,
            stdin,
            lines: rx,
            input_dim: 0,
            classes: 0,
            next_id: 0,
            timeout,
            failed: false,
        };
        match session.next_message(None)? {
            Incoming::Hello { p, c } => {
                if p == 0 || c == 0 {
                    return Err(protocol(None, format!("handshake advertises empty shape p={p}, c={c}")));
                }
                if let Some(expected) = expected_dim {
                    if expected != p {
                        return Err(protocol(
                            None,
                            format!("handshake dimension mismatch: adapter p={p}, expected {expected}"),
                        ));
                    }
                }
                session.input_dim = p;
                session.classes = c;
                Ok(session)
            }
            other => Err(protocol(None, format!("expected hello, got {other:?}"))),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn next_message(&mut self, waiting_for: Option<u64>) -> Result<Incoming> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::Io(e)),
            Err(RecvTimeoutError::Timeout) => {
                return Err(match waiting_for {
                    Some(id) => Error::Timeout { id },
                    None => protocol(None, "timed out waiting for handshake"),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(protocol(waiting_for, "adapter closed its output stream"))
            }
        };
        serde_json::from_str(&line).map_err(|e| protocol(waiting_for, format!("malformed line {line:?}: {e}")))
    }

    /// Evaluates `rows` (each of length `p`) and returns one logit row per
    /// input row, in input order. Requests carry at most `batch_size` rows and
    /// are all written before responses are collected.
    pub fn evaluate(&mut self, rows: &[Vec<f64>], batch_size: usize) -> Result<Vec<Vec<f64>>> {
        if self.failed {
            return Err(protocol(None, "session was aborted by an earlier protocol error"));
        }
        let out = self.evaluate_inner(rows, batch_size);
        if out.is_err() {
            self.failed = true;
            let _ = self.child.kill();
        }
        out
    }

    fn evaluate_inner(&mut self, rows: &[Vec<f64>], batch_size: usize) -> Result<Vec<Vec<f64>>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != self.input_dim) {
            return Err(Error::shape(format!(
                "row {i} has {} activations, adapter expects {}",
                r.len(),
                self.input_dim
            )));
        }
        let batch_size = batch_size.max(1);
        let mut pending: HashMap<u64, (usize, usize)> = HashMap::new();
        for (chunk_index, chunk) in rows.chunks(batch_size).enumerate() {
            let id = self.next_id;
            self.next_id += 1;
            let request = EvalRequest {
                kind: "eval",
                id,
                activations: chunk,
            };
            serde_json::to_writer(&mut self.stdin, &request)?;
            self.stdin.write_all(b"\n")?;
            pending.insert(id, (chunk_index * batch_size, chunk.len()));
        }
        self.stdin.flush()?;

        let mut out: Vec<Vec<f64>> = vec![Vec::new(); rows.len()];
        while !pending.is_empty() {
            let oldest = *pending.keys().min().expect("non-empty");
            match self.next_message(Some(oldest))? {
                Incoming::Result { id, logits } => {
                    let (start, len) = pending
                        .remove(&id)
                        .ok_or_else(|| protocol(Some(id), "response for unknown request id"))?;
                    if logits.len() != len {
                        return Err(protocol(
                            Some(id),
                            format!("expected {len} logit rows, got {}", logits.len()),
                        ));
                    }
                    for (offset, row) in logits.into_iter().enumerate() {
                        if row.len() != self.classes {
                            return Err(protocol(
                                Some(id),
                                format!("logit row has {} entries, handshake said {}", row.len(), self.classes),
                            ));
                        }
                        out[start + offset] = row;
                    }
                }
                Incoming::Error { id, message } => {
                    return Err(protocol(id, format!("adapter error: {message}")));
                }
                Incoming::Hello { .. } => return Err(protocol(None, "unexpected second hello")),
            }
        }
        Ok(out)
    }
}

impl Drop for HeadSession {
    fn drop(&mut self) {
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Thread-safe handle to an adapter; concurrent callers are serialized.
#[derive(Debug)]
pub struct ExternalHead {
    session: Mutex<HeadSession>,
    input_dim: usize,
    classes: usize,
    batch_size: usize,
}

impl ExternalHead {
    pub fn new(session: HeadSession, batch_size: usize) -> Self {
        Self {
            input_dim: session.input_dim(),
            classes: session.classes(),
            session: Mutex::new(session),
            batch_size: batch_size.max(1),
        }
    }

    pub fn spawn(command: &[String], expected_dim: Option<usize>) -> Result<Self> {
        Ok(Self::new(
            HeadSession::spawn(command, expected_dim, DEFAULT_TIMEOUT)?,
            DEFAULT_BATCH_SIZE,
        ))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn evaluate(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut session = self
            .session
            .lock()
            .map_err(|_| protocol(None, "session lock poisoned"))?;
        session.evaluate(rows, self.batch_size)
    }
}
