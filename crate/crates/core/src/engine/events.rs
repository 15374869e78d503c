use std::io::{BufRead, BufReader, Write};
use std::fs::{self, OpenOptions};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Event kinds, as written to the log.
pub mod kind {
    pub const OPENED: &str = "opened";
    pub const PLAN_DRAFTED: &str = "plan-drafted";
    pub const PLAN_APPROVED: &str = "plan-approved";
    pub const CODE_GENERATED: &str = "code-generated";
    pub const TESTS_RUN: &str = "tests-run";
    pub const CLOSED: &str = "closed";
    pub const STALLED: &str = "stalled";
    pub const AGENT_FAILED: &str = "agent-failed";
    pub const RUNNER_ERROR: &str = "runner-error";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopEvent {
    pub seq: u64,
    /// RFC 3339, millisecond precision, UTC.
    pub ts: String,
    pub issue: String,
    pub kind: String,
    pub payload: Value,
}

impl LoopEvent {
    pub fn new(seq: u64, issue: &str, kind: &str, payload: Value) -> Self {
        LoopEvent {
            seq,
            ts: now(),
            issue: issue.to_owned(),
            kind: kind.to_owned(),
            payload,
        }
    }

    /// The event with its timestamp blanked, for comparisons across runs.
    pub fn untimed(&self) -> LoopEvent {
        LoopEvent {
            ts: String::new(),
            ..self.clone()
        }
    }
}

fn now() -> String {
    let t: DateTime<Utc> = Utc::now();
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Append events to a JSON-lines log, creating it if needed.
pub fn append_events(path: &Path, events: &[LoopEvent]) -> std::io::Result<()> {
    if events.is_empty() {
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut buf = String::new();
    for e in events {
        buf.push_str(&serde_json::to_string(e).map_err(std::io::Error::other)?);
        buf.push('\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(buf.as_bytes())
}

/// Read every event in a log. A missing file is an empty log.
pub fn read_events(path: &Path) -> std::io::Result<Vec<LoopEvent>> {
    let f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), i + 1),
            )
        })?;
        out.push(event);
    }
    Ok(out)
}
