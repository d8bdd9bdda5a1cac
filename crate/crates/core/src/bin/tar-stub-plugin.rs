//! Deterministic stand-in for an external classifier.
//!
//! Speaks the line-delimited JSON plugin protocol. Scores come from a TSV
//! score table (`extra.score_table`, lines `doc_id<TAB>score`) or, without
//! one, from a hash of the doc_id and the pretrain epoch count.
//!
//! Further `extra` keys inject faults or assertions for conformance tests:
//!
//! | key | effect |
//! |---|---|
//! | `expect_pretrain_epochs` | handshake fails unless E matches |
//! | `check_cumulative` | `true`: each fit must contain every earlier example |
//! | `fail_cmd`, `fail_after` | reply `ok:false` to that command after N successes |
//! | `exit_on` | exit without replying when that command arrives |
//! | `sleep_on`, `sleep_ms` | delay the reply to that command |
//! | `short_scores` | `true`: omit the last score |
//! | `bad_seq` | `true`: answer score requests with a stale seq |
//! | `log_path` | append every request after the handshake to this file |

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::time::Duration;

use serde_json::{json, Value};
use tar_bench::corpus::Corpus;
use tar_bench::rng::{fnv1a64, mix64};

#[derive(Default)]
struct Stub {
    extra: BTreeMap<String, String>,
    epochs: u64,
    pool: HashSet<String>,
    table: Option<HashMap<String, f64>>,
    fitted: Vec<(String, i64)>,
    successes: HashMap<String, usize>,
}

enum Reply {
    Ok(Value),
    Err(String),
    Exit,
}

fn hashed_score(doc_id: &str, epochs: u64) -> f64 {
    let h = mix64(fnv1a64(doc_id.as_bytes()) ^ mix64(epochs));
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

fn load_table(path: &str) -> Result<HashMap<String, f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("score table {path}: {e}"))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (id, s) = l
                .split_once('\t')
                .ok_or_else(|| format!("bad score table line {l:?}"))?;
            let s: f64 = s.trim().parse().map_err(|e| format!("bad score {s:?}: {e}"))?;
            Ok((id.to_string(), s))
        })
        .collect()
}

impl Stub {
    fn flag(&self, key: &str) -> bool {
        self.extra.get(key).is_some_and(|v| v == "true")
    }

    fn handle(&mut self, cmd: &str, req: &Value) -> Reply {
        if cmd == "handshake" {
            if let Some(extra) = req["extra"].as_object() {
                for (k, v) in extra {
                    let Some(v) = v.as_str() else {
                        return Reply::Err(format!("extra {k:?} is not a string"));
                    };
                    self.extra.insert(k.clone(), v.to_string());
                }
            }
        }
        if self.extra.get("exit_on").is_some_and(|c| c == cmd) {
            eprintln!("stub: exiting on {cmd}");
            return Reply::Exit;
        }
        if self.extra.get("sleep_on").is_some_and(|c| c == cmd) {
            let ms = self.extra.get("sleep_ms").and_then(|v| v.parse().ok()).unwrap_or(1000);
            std::thread::sleep(Duration::from_millis(ms));
        }
        if self.extra.get("fail_cmd").is_some_and(|c| c == cmd) {
            let after: usize = self.extra.get("fail_after").and_then(|v| v.parse().ok()).unwrap_or(0);
            if self.successes.get(cmd).copied().unwrap_or(0) >= after {
                return Reply::Err("out of memory".into());
            }
        }
        let reply = match cmd {
            "handshake" => self.handshake(req),
            "fit" => self.fit(req),
            "score" => self.score(req),
            "shutdown" => Ok(json!({})),
            other => Err(format!("unknown command {other:?}")),
        };
        match reply {
            Ok(v) => {
                *self.successes.entry(cmd.to_string()).or_default() += 1;
                Reply::Ok(v)
            }
            Err(e) => Reply::Err(e),
        }
    }

    fn handshake(&mut self, req: &Value) -> Result<Value, String> {
        self.epochs = req["pretrain_epochs"].as_u64().ok_or("missing pretrain_epochs")?;
        if let Some(want) = self.extra.get("expect_pretrain_epochs") {
            if want.parse::<u64>().ok() != Some(self.epochs) {
                return Err(format!("expected pretrain_epochs {want}, got {}", self.epochs));
            }
        }
        let pool_path = req["pool_path"].as_str().ok_or("missing pool_path")?;
        let pool = Corpus::load(pool_path).map_err(|e| e.to_string())?;
        self.pool = pool.documents().iter().map(|d| d.doc_id.clone()).collect();
        if let Some(path) = self.extra.get("score_table") {
            self.table = Some(load_table(path)?);
        }
        Ok(json!({}))
    }

    fn check_ids<'a>(&self, ids: impl Iterator<Item = &'a str>) -> Result<(), String> {
        for id in ids {
            if !self.pool.contains(id) {
                return Err(format!("unknown doc_id {id:?}"));
            }
        }
        Ok(())
    }

    fn fit(&mut self, req: &Value) -> Result<Value, String> {
        let examples: Vec<(String, i64)> = req["examples"]
            .as_array()
            .ok_or("missing examples")?
            .iter()
            .map(|e| {
                let id = e["doc_id"].as_str().ok_or("example without doc_id")?;
                let label = e["label"]
                    .as_i64()
                    .filter(|l| *l == 1 || *l == -1)
                    .ok_or("label must be 1 or -1")?;
                Ok((id.to_string(), label))
            })
            .collect::<Result<_, &str>>()?;
        if examples.is_empty() {
            return Err("empty fit".into());
        }
        self.check_ids(examples.iter().map(|(d, _)| d.as_str()))?;
        if self.flag("check_cumulative") {
            let now: HashSet<&(String, i64)> = examples.iter().collect();
            if let Some(missing) = self.fitted.iter().find(|e| !now.contains(e)) {
                return Err(format!("non-cumulative fit: {} missing", missing.0));
            }
        }
        self.fitted = examples;
        Ok(json!({}))
    }

    fn score(&mut self, req: &Value) -> Result<Value, String> {
        if self.fitted.is_empty() {
            return Err("not fitted".into());
        }
        let ids: Vec<&str> = req["doc_ids"]
            .as_array()
            .ok_or("missing doc_ids")?
            .iter()
            .map(|v| v.as_str().ok_or("doc_id is not a string"))
            .collect::<Result<_, _>>()?;
        self.check_ids(ids.iter().copied())?;
        let mut scores = ids
            .iter()
            .map(|id| match &self.table {
                Some(t) => t.get(*id).copied().ok_or_else(|| format!("{id:?} not in score table")),
                None => Ok(hashed_score(id, self.epochs)),
            })
            .collect::<Result<Vec<f64>, String>>()?;
        if self.flag("short_scores") {
            scores.pop();
        }
        Ok(json!({ "scores": scores }))
    }
}

fn main() -> ExitCode {
    let mut stub = Stub::default();
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(path) = stub.extra.get("log_path") {
            if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(path) {
                let _ = writeln!(f, "{line}");
            }
        }
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("stub: unparseable request: {e}");
                return ExitCode::from(2);
            }
        };
        let seq = req["seq"].as_u64().unwrap_or(0);
        let cmd = req["cmd"].as_str().unwrap_or("").to_string();
        let reply_seq = if cmd == "score" && stub.flag("bad_seq") {
            seq.saturating_sub(1)
        } else {
            seq
        };
        let reply = match stub.handle(&cmd, &req) {
            Reply::Exit => return ExitCode::from(3),
            Reply::Ok(mut v) => {
                v["seq"] = json!(reply_seq);
                v["ok"] = json!(true);
                v
            }
            Reply::Err(e) => json!({ "seq": reply_seq, "ok": false, "error": e }),
        };
        if writeln!(stdout, "{reply}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
        if cmd == "shutdown" {
            break;
        }
    }
    ExitCode::SUCCESS
}
