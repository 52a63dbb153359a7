//! Process-external generator boundary. One request line (the prompt as
//! canonical JSON) goes out, one reply line comes back, over a local TCP
//! socket or a subprocess's stdio.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::PromptDocument;
use crate::canonical::to_canonical_string;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Endpoint {
    /// `host:port` of a line-oriented socket server.
    Tcp { address: String },
    /// A program started per request; reads one line on stdin, answers one
    /// line on stdout.
    Stdio { program: String, #[serde(default)] args: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub endpoint: Endpoint,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Total tries per request, including the first.
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_attempts() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}

impl AdapterConfig {
    pub fn new(endpoint: Endpoint) -> Self {
        Self {
            endpoint,
            timeout_ms: default_timeout_ms(),
            max_attempts: default_attempts(),
            max_concurrency: default_concurrency(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdapterError {
    #[error("no reply within {timeout_ms} ms after {attempts} attempts")]
    Timeout { timeout_ms: u64, attempts: u32 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { message: String, attempts: u32 },
    #[error("reply is not UTF-8 text")]
    NonText,
}

impl AdapterError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, AdapterError::NonText)
    }
}

enum Failure {
    Timeout,
    Transport(String),
    NonText,
}

/// Counting semaphore bounding in-flight calls.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().expect("gate lock");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct Adapter {
    config: AdapterConfig,
    gate: Gate,
}

impl Adapter {
    pub fn new(config: AdapterConfig) -> Self {
        let cap = config.max_concurrency.max(1);
        Self { config, gate: Gate { in_flight: Mutex::new(0), freed: Condvar::new(), cap } }
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    /// Sends the prompt and returns the raw reply line, retrying timeouts and
    /// transport failures up to `max_attempts` times.
    pub fn call(&self, prompt: &PromptDocument) -> Result<String, AdapterError> {
        let request = to_canonical_string(prompt).map_err(|e| AdapterError::Transport { message: e.to_string(), attempts: 0 })?;
        let _slot = self.gate.enter();
        let attempts = self.config.max_attempts.max(1);
        let mut last = Failure::Transport("not attempted".into());
        for _ in 0..attempts {
            match self.once(&request) {
                Ok(reply) => return Ok(reply),
                Err(Failure::NonText) => return Err(AdapterError::NonText),
                Err(f) => last = f,
            }
        }
        Err(match last {
            Failure::Timeout => AdapterError::Timeout { timeout_ms: self.config.timeout_ms, attempts },
            Failure::Transport(message) => AdapterError::Transport { message, attempts },
            Failure::NonText => AdapterError::NonText,
        })
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.config.timeout_ms.max(1))
    }

    fn once(&self, request: &str) -> Result<String, Failure> {
        match &self.config.endpoint {
            Endpoint::Tcp { address } => self.once_tcp(address, request),
            Endpoint::Stdio { program, args } => self.once_stdio(program, args, request),
        }
    }

    fn once_tcp(&self, address: &str, request: &str) -> Result<String, Failure> {
        let addr = address
            .to_socket_addrs()
            .map_err(|e| Failure::Transport(e.to_string()))?
            .next()
            .ok_or_else(|| Failure::Transport(format!("cannot resolve {address}")))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout()).map_err(io_failure)?;
        stream.set_read_timeout(Some(self.timeout())).map_err(io_failure)?;
        stream.set_write_timeout(Some(self.timeout())).map_err(io_failure)?;
        stream.write_all(request.as_bytes()).map_err(io_failure)?;
        stream.write_all(b"\n").map_err(io_failure)?;
        read_reply(BufReader::new(stream))
    }

    fn once_stdio(&self, program: &str, args: &[String], request: &str) -> Result<String, Failure> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Failure::Transport(e.to_string()))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let payload = format!("{request}\n");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let _ = stdin.write_all(payload.as_bytes());
            drop(stdin);
            let _ = tx.send(read_reply(BufReader::new(stdout)));
        });
        let out = match rx.recv_timeout(self.timeout()) {
            Ok(r) => r,
            Err(_) => Err(Failure::Timeout),
        };
        let _ = child.kill();
        let _ = child.wait();
        out
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => Failure::Timeout,
        _ => Failure::Transport(e.to_string()),
    }
}

fn read_reply<R: Read>(mut reader: BufReader<R>) -> Result<String, Failure> {
    let mut buf = Vec::new();
    reader.read_until(b'\n', &mut buf).map_err(io_failure)?;
    if buf.is_empty() {
        return Err(Failure::Transport("connection closed without a reply".into()));
    }
    while buf.last().is_some_and(|b| *b == b'\n' || *b == b'\r') {
        buf.pop();
    }
    String::from_utf8(buf).map_err(|_| Failure::NonText)
}
