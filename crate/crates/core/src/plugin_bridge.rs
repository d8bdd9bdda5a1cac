//! Drives an external classifier over line-delimited JSON on stdin/stdout.
//!
//! Requests and replies, one object per line, strictly request/reply:
//!
//! ```text
//! -> {"seq":n,"cmd":"handshake","pretrain_epochs":E,"pool_path":"...","extra":{...}}
//! <- {"seq":n,"ok":true}
//! -> {"seq":n,"cmd":"fit","examples":[{"doc_id":"...","label":1},...]}
//! <- {"seq":n,"ok":true}
//! -> {"seq":n,"cmd":"score","doc_ids":["...",...]}
//! <- {"seq":n,"ok":true,"scores":[...]}
//! -> {"seq":n,"cmd":"shutdown"}
//! <- {"seq":n,"ok":true}
//! ```
//!
//! Any reply may be `{"seq":n,"ok":false,"error":"message"}`. `seq` starts
//! at 1 and increases by one per request; a reply must echo it.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::classifier::{ClassifierError, Label, TaskClassifier};

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(600);
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(600);
const EXIT_GRACE: Duration = Duration::from_secs(5);
const STDERR_TAIL_LINES: usize = 20;

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("empty plugin command")]
    EmptyCommand,
    #[error("failed to spawn plugin {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("plugin terminated during {phase}{}", stderr_suffix(.stderr))]
    Terminated { phase: Phase, stderr: Vec<String> },
    #[error("plugin timed out after {}s during {phase}", .timeout.as_secs_f64())]
    Timeout { phase: Phase, timeout: Duration },
    #[error("malformed {phase} reply {line:?}: {message}")]
    Malformed {
        phase: Phase,
        line: String,
        message: String,
    },
    #[error("{phase} reply carries seq {got}, expected {expected}")]
    StaleSeq { phase: Phase, expected: u64, got: u64 },
    #[error("plugin reported error during {phase}: {message}")]
    Remote { phase: Phase, message: String },
    #[error("score count mismatch: requested {expected}, received {got}")]
    ScoreCountMismatch { expected: usize, got: usize },
    #[error("score {value} for {doc_id:?} outside [0, 1]")]
    ScoreOutOfRange { doc_id: String, value: f64 },
    #[error("{0}")]
    State(&'static str),
}

fn stderr_suffix(lines: &[String]) -> String {
    if lines.is_empty() {
        String::new()
    } else {
        format!("; stderr: {}", lines.join(" | "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Handshake,
    Fit,
    Score,
    Shutdown,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Handshake => "handshake",
            Phase::Fit => "fit",
            Phase::Score => "score",
            Phase::Shutdown => "shutdown",
        })
    }
}

/// How to launch an external classifier and what to tell it at handshake.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginSpec {
    /// Executable followed by its arguments.
    pub command: Vec<String>,
    /// Further pre-training epochs the plugin runs before replying to the
    /// handshake. Zero means none.
    pub pretrain_epochs: u32,
    /// Passed verbatim in the handshake.
    pub extra: BTreeMap<String, String>,
    pub handshake_timeout: Duration,
    pub request_timeout: Duration,
}

impl PluginSpec {
    pub fn new(command: Vec<String>, pretrain_epochs: u32) -> Self {
        Self {
            command,
            pretrain_epochs,
            extra: BTreeMap::new(),
            handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
        }
    }
}

/// Where the plugin finds the task's documents (JSONL corpus format).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskManifest {
    pub pool_path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Handshaken,
    Fitted,
    Closed,
}

#[derive(Serialize)]
struct Request<'a> {
    seq: u64,
    #[serde(flatten)]
    command: Cmd<'a>,
}

#[derive(Serialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
enum Cmd<'a> {
    Handshake {
        pretrain_epochs: u32,
        pool_path: &'a Path,
        extra: &'a BTreeMap<String, String>,
    },
    Fit {
        examples: Vec<WireExample<'a>>,
    },
    Score {
        doc_ids: &'a [&'a str],
    },
    Shutdown,
}

#[derive(Serialize)]
struct WireExample<'a> {
    doc_id: &'a str,
    label: i8,
}

/// A live connection to one plugin process.
pub struct PluginSession {
    child: Child,
    stdin: Option<ChildStdin>,
    replies: Receiver<String>,
    stderr_tail: Arc<Mutex<VecDeque<String>>>,
    seq: u64,
    state: SessionState,
    request_timeout: Duration,
}

impl PluginSession {
    /// Spawns the plugin and completes the handshake.
    pub fn open(spec: &PluginSpec, manifest: &TaskManifest) -> Result<Self, PluginError> {
        let (program, args) = spec.command.split_first().ok_or(PluginError::EmptyCommand)?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| PluginError::Spawn {
                command: spec.command.join(" "),
                source,
            })?;

        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, replies) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let stderr_tail = Arc::new(Mutex::new(VecDeque::new()));
        let stderr = child.stderr.take().expect("stderr piped");
        let tail = Arc::clone(&stderr_tail);
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines() {
                let Ok(line) = line else { break };
                log::debug!(target: "plugin", "{line}");
                let mut buf = tail.lock().unwrap_or_else(|e| e.into_inner());
                if buf.len() == STDERR_TAIL_LINES {
                    buf.pop_front();
                }
                buf.push_back(line);
            }
        });

        let mut session = Self {
            stdin: child.stdin.take(),
            child,
            replies,
            stderr_tail,
            seq: 0,
            state: SessionState::Handshaken,
            request_timeout: spec.request_timeout,
        };
        session.request(
            Phase::Handshake,
            Cmd::Handshake {
                pretrain_epochs: spec.pretrain_epochs,
                pool_path: &manifest.pool_path,
                extra: &spec.extra,
            },
            spec.handshake_timeout,
        )?;
        Ok(session)
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    /// Sends the full reviewed set.
    pub fn fit(&mut self, examples: &[(&str, Label)]) -> Result<(), PluginError> {
        if self.state == SessionState::Closed {
            return Err(PluginError::State("session is closed"));
        }
        let examples = examples
            .iter()
            .map(|&(doc_id, label)| WireExample {
                doc_id,
                label: label.as_i8(),
            })
            .collect();
        self.request(Phase::Fit, Cmd::Fit { examples }, self.request_timeout)?;
        self.state = SessionState::Fitted;
        Ok(())
    }

    /// Scores aligned with `doc_ids`, each in `[0, 1]`.
    pub fn score(&mut self, doc_ids: &[&str]) -> Result<Vec<f64>, PluginError> {
        match self.state {
            SessionState::Fitted => {}
            SessionState::Handshaken => return Err(PluginError::State("score requested before fit")),
            SessionState::Closed => return Err(PluginError::State("session is closed")),
        }
        let reply = self.request(Phase::Score, Cmd::Score { doc_ids }, self.request_timeout)?;
        let malformed = |message: &str| PluginError::Malformed {
            phase: Phase::Score,
            line: reply.to_string(),
            message: message.to_string(),
        };
        let raw = reply
            .get("scores")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing \"scores\" array"))?;
        if raw.len() != doc_ids.len() {
            return Err(PluginError::ScoreCountMismatch {
                expected: doc_ids.len(),
                got: raw.len(),
            });
        }
        raw.iter()
            .zip(doc_ids)
            .map(|(v, id)| {
                let value = v.as_f64().ok_or_else(|| malformed("non-numeric score"))?;
                if (0.0..=1.0).contains(&value) {
                    Ok(value)
                } else {
                    Err(PluginError::ScoreOutOfRange {
                        doc_id: id.to_string(),
                        value,
                    })
                }
            })
            .collect()
    }

    /// Sends `shutdown` and waits for the process to exit.
    pub fn close(&mut self) -> Result<(), PluginError> {
        if self.state == SessionState::Closed {
            return Ok(());
        }
        let result = self.request(Phase::Shutdown, Cmd::Shutdown, self.request_timeout);
        self.state = SessionState::Closed;
        self.stdin.take();
        let deadline = Instant::now() + EXIT_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => {
                    self.kill();
                    break;
                }
            }
        }
        result.map(|_| ())
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.state = SessionState::Closed;
    }

    fn stderr_lines(&self) -> Vec<String> {
        // Give the stderr reader a moment to drain after the process dies.
        thread::sleep(Duration::from_millis(20));
        let buf = self.stderr_tail.lock().unwrap_or_else(|e| e.into_inner());
        buf.iter().cloned().collect()
    }

    fn terminated(&mut self, phase: Phase) -> PluginError {
        let stderr = self.stderr_lines();
        self.kill();
        PluginError::Terminated { phase, stderr }
    }

    fn request(&mut self, phase: Phase, command: Cmd<'_>, timeout: Duration) -> Result<Value, PluginError> {
        self.seq += 1;
        let seq = self.seq;
        let mut line = serde_json::to_string(&Request { seq, command }).expect("requests serialize");
        line.push('\n');
        let written = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => return Err(PluginError::State("session is closed")),
        };
        if written.is_err() {
            return Err(self.terminated(phase));
        }

        let reply = match self.replies.recv_timeout(timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Disconnected) => return Err(self.terminated(phase)),
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                return Err(PluginError::Timeout { phase, timeout });
            }
        };
        let malformed = |message: &str| PluginError::Malformed {
            phase,
            line: reply.clone(),
            message: message.to_string(),
        };
        let value: Value = serde_json::from_str(&reply).map_err(|e| malformed(&e.to_string()))?;
        let got = value
            .get("seq")
            .and_then(Value::as_u64)
            .ok_or_else(|| malformed("missing integer \"seq\""))?;
        if got != seq {
            return Err(PluginError::StaleSeq {
                phase,
                expected: seq,
                got,
            });
        }
        match value.get("ok").and_then(Value::as_bool) {
            Some(true) => Ok(value),
            Some(false) => Err(PluginError::Remote {
                phase,
                message: value
                    .get("error")
                    .and_then(Value::as_str)
                    .unwrap_or("unspecified error")
                    .to_string(),
            }),
            None => Err(malformed("missing boolean \"ok\"")),
        }
    }
}

impl Drop for PluginSession {
    fn drop(&mut self) {
        if self.state != SessionState::Closed {
            self.kill();
        }
    }
}

/// Adapts a plugin session to the review loop's classifier contract.
pub struct PluginClassifier {
    session: PluginSession,
    doc_ids: Vec<String>,
}

impl PluginClassifier {
    pub fn open(spec: &PluginSpec, manifest: &TaskManifest, doc_ids: Vec<String>) -> Result<Self, PluginError> {
        Ok(Self {
            session: PluginSession::open(spec, manifest)?,
            doc_ids,
        })
    }
}

impl TaskClassifier for PluginClassifier {
    fn fit(&mut self, examples: &[(usize, Label)]) -> Result<(), ClassifierError> {
        if examples.is_empty() {
            return Err(ClassifierError::NoExamples);
        }
        let wire: Vec<(&str, Label)> = examples.iter().map(|&(i, l)| (self.doc_ids[i].as_str(), l)).collect();
        Ok(self.session.fit(&wire)?)
    }

    fn score(&mut self, docs: &[usize]) -> Result<Vec<f64>, ClassifierError> {
        let ids: Vec<&str> = docs.iter().map(|&i| self.doc_ids[i].as_str()).collect();
        Ok(self.session.score(&ids)?)
    }

    fn close(&mut self) -> Result<(), ClassifierError> {
        Ok(self.session.close()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let extra: BTreeMap<String, String> = [("backbone".to_string(), "tiny".to_string())].into();
        let hs = Request {
            seq: 1,
            command: Cmd::Handshake {
                pretrain_epochs: 0,
                pool_path: Path::new("/tmp/pool.jsonl"),
                extra: &extra,
            },
        };
        assert_eq!(
            serde_json::to_string(&hs).unwrap(),
            r#"{"seq":1,"cmd":"handshake","pretrain_epochs":0,"pool_path":"/tmp/pool.jsonl","extra":{"backbone":"tiny"}}"#
        );
        let fit = Request {
            seq: 2,
            command: Cmd::Fit {
                examples: vec![
                    WireExample { doc_id: "d1", label: 1 },
                    WireExample {
                        doc_id: "d2",
                        label: -1,
                    },
                ],
            },
        };
        assert_eq!(
            serde_json::to_string(&fit).unwrap(),
            r#"{"seq":2,"cmd":"fit","examples":[{"doc_id":"d1","label":1},{"doc_id":"d2","label":-1}]}"#
        );
        let score = Request {
            seq: 3,
            command: Cmd::Score { doc_ids: &["a", "b"] },
        };
        assert_eq!(
            serde_json::to_string(&score).unwrap(),
            r#"{"seq":3,"cmd":"score","doc_ids":["a","b"]}"#
        );
        let bye = Request {
            seq: 4,
            command: Cmd::Shutdown,
        };
        assert_eq!(serde_json::to_string(&bye).unwrap(), r#"{"seq":4,"cmd":"shutdown"}"#);
    }

    #[test]
    fn spawn_failure_reported() {
        let spec = PluginSpec::new(vec!["/nonexistent/plugin-binary".into()], 0);
        let manifest = TaskManifest {
            pool_path: "/tmp/none".into(),
        };
        assert!(matches!(
            PluginSession::open(&spec, &manifest),
            Err(PluginError::Spawn { .. })
        ));
        let empty = PluginSpec::new(vec![], 0);
        assert!(matches!(
            PluginSession::open(&empty, &manifest),
            Err(PluginError::EmptyCommand)
        ));
    }
}
