//! External-command bridges. Commands are split on whitespace into argv and
//! spawned directly, without a shell.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{conform, Agent, AgentError, ChangeSet, GenerateRequest, IssueContext, RunnerError, TestOutcome, TestRunner};
use crate::config::{CommandConfig, RunnerConfig};

const POLL: Duration = Duration::from_millis(5);

enum Waited {
    Exited(ExitStatus),
    TimedOut(Duration),
}

fn wait_with_timeout(child: &mut Child, timeout: Duration) -> std::io::Result<Waited> {
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Waited::Exited(status));
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(Waited::TimedOut(start.elapsed()));
        }
        thread::sleep(POLL);
    }
}

/// Drain a pipe on a helper thread so a chatty child cannot block on a full
/// pipe while we poll for its exit.
fn drain(pipe: Option<impl Read + Send + 'static>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = String::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_string(&mut buf);
        }
        buf
    })
}

fn tail(s: &str) -> String {
    let s = s.trim();
    let start = s.char_indices().rev().nth(499).map_or(0, |(i, _)| i);
    s[start..].to_owned()
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (before + column.saturating_sub(1)).min(text.len())
}

#[derive(Deserialize)]
struct ResultFile {
    results: Vec<TestOutcome>,
}

/// Parse a runner result file.
pub fn parse_results(text: &str) -> Result<Vec<TestOutcome>, RunnerError> {
    serde_json::from_str::<ResultFile>(text)
        .map(|f| f.results)
        .map_err(|e| RunnerError::Malformed {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })
}

/// Runs a command template such as `./run-tests --only {ids} --json {output}`.
/// `{ids}` becomes a comma-separated id list, `{output}` the result path.
#[derive(Debug, Clone)]
pub struct CommandRunner {
    template: Vec<String>,
    timeout: Duration,
    cwd: Option<PathBuf>,
}

impl CommandRunner {
    pub fn new(config: &RunnerConfig) -> Result<Self, RunnerError> {
        let template: Vec<String> = config.command.split_whitespace().map(str::to_owned).collect();
        let has = |p: &str| template.iter().any(|a| a.contains(p));
        if template.is_empty() || !has("{ids}") || !has("{output}") {
            return Err(RunnerError::InvalidTemplate(config.command.clone()));
        }
        Ok(CommandRunner {
            template,
            timeout: Duration::from_secs(config.timeout_secs),
            cwd: None,
        })
    }

    pub fn in_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cwd = Some(dir.into());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn argv(&self, ids: &[String], output: &Path) -> Vec<String> {
        let ids = ids.join(",");
        let output = output.to_string_lossy();
        self.template
            .iter()
            .map(|a| a.replace("{ids}", &ids).replace("{output}", &output))
            .collect()
    }
}

impl TestRunner for CommandRunner {
    fn run(&mut self, test_ids: &[String]) -> Result<Vec<TestOutcome>, RunnerError> {
        let scratch = tempfile::tempdir().map_err(|e| RunnerError::Io(e.to_string()))?;
        let output = scratch.path().join("results.json");
        let argv = self.argv(test_ids, &output);
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped());
        if let Some(dir) = &self.cwd {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| RunnerError::Spawn {
            command: argv[0].clone(),
            message: e.to_string(),
        })?;
        let stderr = drain(child.stderr.take());
        let waited = wait_with_timeout(&mut child, self.timeout).map_err(|e| RunnerError::Io(e.to_string()))?;
        // After a timeout a grandchild may still hold the pipe; leave the
        // drain thread to finish on its own.
        let status = match waited {
            Waited::TimedOut(elapsed) => return Err(RunnerError::Timeout { elapsed }),
            Waited::Exited(s) => s,
        };
        let stderr = stderr.join().unwrap_or_default();
        let text = match std::fs::read_to_string(&output) {
            Ok(t) => t,
            Err(_) if !status.success() => {
                return Err(RunnerError::NonzeroExit {
                    status: status.to_string(),
                    stderr: tail(&stderr),
                })
            }
            Err(_) => return Err(RunnerError::MissingResultFile),
        };
        conform(test_ids, parse_results(&text)?)
    }
}

#[derive(Deserialize)]
struct Reply {
    plan: Option<String>,
    changes: Option<ChangeSet>,
}

/// Sends one JSON request per call on the child's stdin and reads one JSON
/// reply from its stdout. No retries.
#[derive(Debug, Clone)]
pub struct CommandAgent {
    argv: Vec<String>,
    timeout: Duration,
    cwd: Option<PathBuf>,
}

impl CommandAgent {
    pub fn new(config: &CommandConfig) -> Result<Self, AgentError> {
        let argv: Vec<String> = config.command.split_whitespace().map(str::to_owned).collect();
        if argv.is_empty() {
            return Err(AgentError::Spawn {
                command: config.command.clone(),
                message: "empty command".into(),
            });
        }
        Ok(CommandAgent {
            argv,
            timeout: Duration::from_secs(config.timeout_secs),
            cwd: None,
        })
    }

    pub fn in_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cwd = Some(dir.into());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn call(&self, request: &serde_json::Value) -> Result<Reply, AgentError> {
        let mut cmd = Command::new(&self.argv[0]);
        cmd.args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(dir) = &self.cwd {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| AgentError::Spawn {
            command: self.argv[0].clone(),
            message: e.to_string(),
        })?;
        let stdout = drain(child.stdout.take());
        let stderr = drain(child.stderr.take());
        if let Some(mut stdin) = child.stdin.take() {
            // A child that exits without reading its input is not an error
            // by itself; its reply decides.
            let _ = stdin.write_all(request.to_string().as_bytes());
            let _ = stdin.write_all(b"\n");
        }
        let waited = wait_with_timeout(&mut child, self.timeout).map_err(|e| AgentError::Failed(e.to_string()))?;
        let status = match waited {
            Waited::TimedOut(elapsed) => return Err(AgentError::Timeout { elapsed }),
            Waited::Exited(s) => s,
        };
        let (stdout, stderr) = (stdout.join().unwrap_or_default(), stderr.join().unwrap_or_default());
        if !status.success() {
            return Err(AgentError::Exit {
                status: status.to_string(),
                stderr: tail(&stderr),
            });
        }
        serde_json::from_str(stdout.trim()).map_err(|e| AgentError::Malformed(e.to_string()))
    }
}

impl Agent for CommandAgent {
    fn draft_plan(&mut self, issue: &IssueContext) -> Result<String, AgentError> {
        self.call(&json!({"kind": "plan", "issue": issue}))?
            .plan
            .ok_or(AgentError::Schema("plan"))
    }

    fn generate(&mut self, request: &GenerateRequest<'_>) -> Result<ChangeSet, AgentError> {
        let mut body = serde_json::to_value(request).map_err(|e| AgentError::Failed(e.to_string()))?;
        body["kind"] = json!("generate");
        self.call(&body)?.changes.ok_or(AgentError::Schema("changes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_follow_lines() {
        let text = "{\n  \"results\": [x]\n}";
        let RunnerError::Malformed { offset, .. } = parse_results(text).unwrap_err() else {
            panic!("expected parse error");
        };
        assert_eq!(&text[offset..offset + 1], "x");
    }

    #[test]
    fn template_needs_placeholders() {
        let cfg = |c: &str| RunnerConfig {
            command: c.into(),
            timeout_secs: 1,
        };
        assert!(CommandRunner::new(&cfg("run {ids}")).is_err());
        assert!(CommandRunner::new(&cfg("")).is_err());
        let r = CommandRunner::new(&cfg("run --ids={ids} -o {output}")).unwrap();
        assert_eq!(
            r.argv(&["TC-1".into(), "TC-2".into()], Path::new("/tmp/r.json")),
            ["run", "--ids=TC-1,TC-2", "-o", "/tmp/r.json"]
        );
    }
}
