//! Agent and test-runner contracts, with a seeded mock and an external
//! command bridge for each.

mod command;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{AcceptanceTest, AdRecord, C4Model};

pub use command::{CommandAgent, CommandRunner};
pub use mock::{derive_seed, MockAgent, MockAgentParams, MockRunner, MockWorld, ParamError, SharedWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: String,
    pub status: TestStatus,
    #[serde(default)]
    pub message: String,
    #[serde(default)]
    pub duration_ms: u64,
}

impl TestOutcome {
    pub fn passed(&self) -> bool {
        self.status == TestStatus::Pass
    }
}

/// Everything an agent is shown about an issue. Agents never see the bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IssueContext {
    pub id: String,
    pub title: String,
    pub description: String,
    pub constraint_tests: Vec<AcceptanceTest>,
    pub c4: C4Model,
    pub adrs: Vec<AdRecord>,
}

impl IssueContext {
    pub fn constraint_ids(&self) -> impl Iterator<Item = &str> {
        self.constraint_tests.iter().map(|t| t.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GenerateRequest<'a> {
    pub issue: &'a IssueContext,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<&'a str>,
    /// Failing outcomes of the previous test run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<&'a [TestOutcome]>,
}

/// Free-form description of what a generate call changed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChangeSet {
    pub summary: String,
    #[serde(default)]
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("cannot start agent `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("agent timed out after {:.1}s", .elapsed.as_secs_f64())]
    Timeout { elapsed: Duration },
    #[error("agent exited with {status}: {stderr}")]
    Exit { status: String, stderr: String },
    #[error("malformed agent reply: {0}")]
    Malformed(String),
    #[error("agent reply lacks `{0}`")]
    Schema(&'static str),
    #[error("agent failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunnerError {
    #[error("unknown test id `{0}`")]
    UnknownId(String),
    #[error("runner template must contain {{ids}} and {{output}}: `{0}`")]
    InvalidTemplate(String),
    #[error("cannot start runner `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("runner timed out after {:.1}s", .elapsed.as_secs_f64())]
    Timeout { elapsed: Duration },
    #[error("runner exited with {status} and wrote no result file: {stderr}")]
    NonzeroExit { status: String, stderr: String },
    #[error("runner wrote no result file")]
    MissingResultFile,
    #[error("malformed result file at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("no outcome for {}", .0.join(", "))]
    MissingIds(Vec<String>),
    #[error("outcomes for unrequested ids {}", .0.join(", "))]
    ExtraIds(Vec<String>),
    #[error("several outcomes for {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("runner i/o: {0}")]
    Io(String),
}

pub trait Agent: Send {
    fn draft_plan(&mut self, issue: &IssueContext) -> Result<String, AgentError>;
    fn generate(&mut self, request: &GenerateRequest<'_>) -> Result<ChangeSet, AgentError>;
}

pub trait TestRunner: Send {
    /// Exactly one outcome per requested id, in request order.
    fn run(&mut self, test_ids: &[String]) -> Result<Vec<TestOutcome>, RunnerError>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn draft_plan(&mut self, issue: &IssueContext) -> Result<String, AgentError> {
        (**self).draft_plan(issue)
    }
    fn generate(&mut self, request: &GenerateRequest<'_>) -> Result<ChangeSet, AgentError> {
        (**self).generate(request)
    }
}

impl<R: TestRunner + ?Sized> TestRunner for Box<R> {
    fn run(&mut self, test_ids: &[String]) -> Result<Vec<TestOutcome>, RunnerError> {
        (**self).run(test_ids)
    }
}

/// Check a runner's answer against the request: one outcome per id, nothing
/// extra. Returns outcomes reordered to match `requested`.
pub fn conform(requested: &[String], outcomes: Vec<TestOutcome>) -> Result<Vec<TestOutcome>, RunnerError> {
    use std::collections::{BTreeMap, BTreeSet};
    let wanted: BTreeSet<&str> = requested.iter().map(String::as_str).collect();
    let mut by_id: BTreeMap<String, TestOutcome> = BTreeMap::new();
    let mut dupes = BTreeSet::new();
    let mut extra = BTreeSet::new();
    for o in outcomes {
        if !wanted.contains(o.test_id.as_str()) {
            extra.insert(o.test_id.clone());
        } else if by_id.contains_key(&o.test_id) {
            dupes.insert(o.test_id.clone());
        } else {
            by_id.insert(o.test_id.clone(), o);
        }
    }
    if !extra.is_empty() {
        return Err(RunnerError::ExtraIds(extra.into_iter().collect()));
    }
    if !dupes.is_empty() {
        return Err(RunnerError::DuplicateIds(dupes.into_iter().collect()));
    }
    let missing: Vec<String> = requested
        .iter()
        .filter(|id| !by_id.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(RunnerError::MissingIds(missing));
    }
    Ok(requested
        .iter()
        .map(|id| by_id.remove(id).expect("checked above"))
        .collect())
}
