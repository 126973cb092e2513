//! Newline-delimited JSON bridge to an external classifier process.
//!
//! The child writes `{"fex_bridge":1,"n_features":N,"n_classes":K}` as its
//! first stdout line. Each request is `{"id":<u64>,"input":[...]}` on its
//! stdin and must be answered by `{"id":<u64>,"probs":[...]}` with `K`
//! probabilities summing to one within [`BRIDGE_SUM_TOL`]. One request is
//! in flight at a time.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::error::{FexError, Result};
use crate::types::ProbVector;

pub const DEFAULT_BRIDGE_TIMEOUT: Duration = Duration::from_secs(10);
pub const BRIDGE_SUM_TOL: f64 = 1e-6;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Handshake {
    fex_bridge: u64,
    n_features: usize,
    n_classes: usize,
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    input: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    id: u64,
    probs: Vec<f64>,
}

struct Channel {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    reader: Option<JoinHandle<()>>,
    lines_read: usize,
    next_id: u64,
    broken: Option<String>,
}

impl Channel {
    fn read_line(&mut self, timeout: Duration) -> Result<String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => {
                self.lines_read += 1;
                Ok(line)
            }
            Ok(Err(e)) => Err(FexError::Bridge(format!("reading child stdout: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(FexError::Bridge(format!(
                "no response within {:.1} s",
                timeout.as_secs_f64()
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self
                    .child
                    .try_wait()
                    .ok()
                    .flatten()
                    .map_or_else(|| "closed stdout".to_string(), |s| format!("exited with {s}"));
                Err(FexError::Bridge(format!("child process {status}")))
            }
        }
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
        // The reader sees EOF once the child is gone. A grandchild holding
        // the pipe open must not block us, so wait at most one second.
        if let Some(h) = self.reader.take() {
            let deadline = std::time::Instant::now() + Duration::from_secs(1);
            while !h.is_finished() && std::time::Instant::now() < deadline {
                std::thread::sleep(Duration::from_millis(1));
            }
            if h.is_finished() {
                let _ = h.join();
            }
        }
    }
}

/// A running black-box classifier process.
pub struct BlackBoxBridge {
    channel: Mutex<Channel>,
    n_features: usize,
    n_classes: usize,
    timeout: Duration,
}

impl std::fmt::Debug for BlackBoxBridge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlackBoxBridge")
            .field("n_features", &self.n_features)
            .field("n_classes", &self.n_classes)
            .finish_non_exhaustive()
    }
}

impl BlackBoxBridge {
    /// Spawns `command` through `sh -c` and validates its handshake.
    pub fn open(command: &str) -> Result<Self> {
        Self::open_with_timeout(command, DEFAULT_BRIDGE_TIMEOUT)
    }

    pub fn open_with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| FexError::Bridge(format!("spawning {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");

        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            let mut stdout = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match stdout.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        let trimmed = line.trim_end_matches(['\n', '\r']).to_string();
                        if tx.send(Ok(trimmed)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });

        let mut channel = Channel {
            child,
            stdin: Some(stdin),
            lines: rx,
            reader: Some(reader),
            lines_read: 0,
            next_id: 0,
            broken: None,
        };

        let line = channel.read_line(timeout)?;
        let hs: Handshake = serde_json::from_str(&line).map_err(|e| FexError::Protocol {
            line: channel.lines_read,
            message: format!("bad handshake {line:?}: {e}"),
        })?;
        if hs.fex_bridge != 1 {
            return Err(FexError::Protocol {
                line: channel.lines_read,
                message: format!("unsupported bridge version {}", hs.fex_bridge),
            });
        }
        if hs.n_features == 0 || hs.n_classes == 0 {
            return Err(FexError::Protocol {
                line: channel.lines_read,
                message: "handshake declares an empty input or output".into(),
            });
        }
        Ok(BlackBoxBridge {
            channel: Mutex::new(channel),
            n_features: hs.n_features,
            n_classes: hs.n_classes,
            timeout,
        })
    }

    fn query(&self, ch: &mut Channel, x: &[f64]) -> Result<ProbVector> {
        let id = ch.next_id;
        ch.next_id += 1;
        let mut payload = serde_json::to_string(&Request { id, input: x })?;
        payload.push('\n');
        let stdin = ch.stdin.as_mut().expect("open until drop");
        stdin
            .write_all(payload.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| FexError::Bridge(format!("writing request {id}: {e}")))?;

        let line = ch.read_line(self.timeout)?;
        let at = ch.lines_read;
        let resp: Response = serde_json::from_str(&line).map_err(|e| FexError::Protocol {
            line: at,
            message: format!("malformed response {line:?}: {e}"),
        })?;
        if resp.id != id {
            return Err(FexError::Protocol {
                line: at,
                message: format!("response id {} does not match request {id}", resp.id),
            });
        }
        if resp.probs.len() != self.n_classes {
            return Err(FexError::Protocol {
                line: at,
                message: format!("expected {} probabilities, got {}", self.n_classes, resp.probs.len()),
            });
        }
        ProbVector::with_tolerance(resp.probs, BRIDGE_SUM_TOL).map_err(|e| FexError::Protocol {
            line: at,
            message: e.to_string(),
        })
    }
}

impl Predictor for BlackBoxBridge {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        if x.len() != self.n_features {
            return Err(FexError::dim("bridge input", self.n_features, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FexError::Numeric("bridge input".into()));
        }
        let mut ch = self.channel.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(reason) = &ch.broken {
            return Err(FexError::Bridge(format!("bridge unusable after earlier failure: {reason}")));
        }
        let out = self.query(&mut ch, x);
        if let Err(e) = &out {
            // a failed exchange leaves the stream out of step
            ch.broken = Some(e.to_string());
        }
        out
    }
}
