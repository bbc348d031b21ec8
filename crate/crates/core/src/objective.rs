//! Objective evaluators: in-process functions and an external-process adapter.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};

/// A black-box function on the unit cube `[0,1]^D`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    /// Whether calls must not overlap across concurrent runs.
    fn is_serial(&self) -> bool {
        false
    }
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// Talks to a long-running child process: each evaluation writes one line of
/// `D` space-separated coordinates to its stdin and reads one scalar line
/// back from its stdout.
pub struct ExternalObjective {
    dim: usize,
    timeout: Duration,
    session: Mutex<Session>,
}

impl ExternalObjective {
    pub fn spawn(program: &str, args: &[String], dim: usize, timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Objective(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { dim, timeout, session: Mutex::new(Session { child, stdin, lines: rx }) })
    }
}

impl Objective for ExternalObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        let mut s = self.session.lock().map_err(|_| Error::Objective("evaluator poisoned".into()))?;
        let line: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        writeln!(s.stdin, "{}", line.join(" "))
            .and_then(|_| s.stdin.flush())
            .map_err(|e| Error::Objective(format!("write to evaluator failed: {e}")))?;
        let reply = match s.lines.recv_timeout(self.timeout) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(Error::Objective(format!("read from evaluator failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Objective(format!("evaluator timed out after {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => return Err(Error::Objective("evaluator exited".into())),
        };
        reply
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Objective(format!("evaluator replied `{}`, expected a number", reply.trim())))
    }

    fn is_serial(&self) -> bool {
        true
    }
}

impl Drop for ExternalObjective {
    fn drop(&mut self) {
        if let Ok(s) = self.session.get_mut() {
            let _ = s.child.kill();
            let _ = s.child.wait();
        }
    }
}
