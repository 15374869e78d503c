//! The implement/verify loop for one work issue.
//!
//! ```text
//! issue_opened → plan_drafted → plan_approved → code_generated → tests_run
//!                                                     ↑              │
//!                                                     └── failures ──┤
//!                                                   issue_closed ←───┤
//!                                                        stalled ←───┘ (cap reached)
//! ```
//!
//! Every transition appends an event; [`LoopRun::replay`] rebuilds a run from
//! its events alone.

mod events;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use events::{append_events, kind, read_events, LoopEvent};

pub use crate::adapters::{TestOutcome, TestStatus};
use crate::adapters::{Agent, AgentError, GenerateRequest, IssueContext, RunnerError, TestRunner};
use crate::artifact::{ArtifactBundle, IssueStatus};
use crate::ids::{natural_cmp, sort_natural};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default = "default_true")]
    pub require_plan_approval: bool,
}

fn default_max_iterations() -> u32 {
    25
}
fn default_true() -> bool {
    true
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: default_max_iterations(),
            require_plan_approval: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopState {
    IssueOpened,
    PlanDrafted,
    PlanApproved,
    CodeGenerated,
    TestsRun,
    IssueClosed,
    Stalled,
}

impl LoopState {
    pub fn as_str(self) -> &'static str {
        match self {
            LoopState::IssueOpened => "issue_opened",
            LoopState::PlanDrafted => "plan_drafted",
            LoopState::PlanApproved => "plan_approved",
            LoopState::CodeGenerated => "code_generated",
            LoopState::TestsRun => "tests_run",
            LoopState::IssueClosed => "issue_closed",
            LoopState::Stalled => "stalled",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, LoopState::IssueClosed | LoopState::Stalled)
    }

    /// The legal transition relation.
    pub fn can_move_to(self, next: LoopState) -> bool {
        use LoopState::*;
        matches!(
            (self, next),
            (IssueOpened, PlanDrafted)
                | (PlanDrafted, PlanApproved)
                | (PlanApproved, CodeGenerated)
                | (CodeGenerated, TestsRun)
                | (TestsRun, IssueClosed)
                | (TestsRun, CodeGenerated)
                | (TestsRun, Stalled)
        )
    }
}

impl std::fmt::Display for LoopState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown issue `{0}`")]
    UnknownIssue(String),
    #[error("issue `{0}` is already closed")]
    IssueClosed(String),
    #[error("issue `{0}` has no constraint tests")]
    NoConstraints(String),
    #[error("issue `{issue}` is blocked by unfinished phases {}", .blocking.join(", "))]
    DependencyNotSatisfied { issue: String, blocking: Vec<String> },
    #[error("max_iterations must be at least 1")]
    InvalidConfig,
    #[error("cannot {op} in state {state}")]
    WrongState { op: &'static str, state: LoopState },
    #[error("plan is waiting for approval")]
    AwaitingApproval,
    #[error("run already ended in state {0}")]
    Terminal(LoopState),
    #[error("agent returned an empty plan")]
    EmptyPlan,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("runner reported `{0}`, which is not a constraint of this issue")]
    ForeignTestId(String),
    #[error("cannot write plan {path}: {message}")]
    PlanWrite { path: String, message: String },
    #[error("cannot replay event {seq}: {message}")]
    Replay { seq: u64, message: String },
}

impl EngineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownIssue(_) => "unknown-issue",
            EngineError::IssueClosed(_) => "issue-closed",
            EngineError::NoConstraints(_) => "no-constraints",
            EngineError::DependencyNotSatisfied { .. } => "dependency-not-satisfied",
            EngineError::InvalidConfig => "invalid-config",
            EngineError::WrongState { .. } => "wrong-state",
            EngineError::AwaitingApproval => "awaiting-approval",
            EngineError::Terminal(_) => "terminal-state",
            EngineError::EmptyPlan => "empty-plan",
            EngineError::Agent(_) => "agent-failed",
            EngineError::Runner(_) => "runner-error",
            EngineError::ForeignTestId(_) => "foreign-test-id",
            EngineError::PlanWrite { .. } => "plan-write",
            EngineError::Replay { .. } => "replay",
        }
    }

    /// Illegal given the current state, as opposed to a failure while acting.
    pub fn is_conflict(&self) -> bool {
        matches!(
            self,
            EngineError::IssueClosed(_)
                | EngineError::DependencyNotSatisfied { .. }
                | EngineError::WrongState { .. }
                | EngineError::AwaitingApproval
                | EngineError::Terminal(_)
        )
    }
}

/// How much the agent is told. `PromptOnly` withholds the plan and the test
/// outcomes from generate calls; tests still run so the loop can stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Guidance {
    #[default]
    Guardrail,
    PromptOnly,
}

/// Adapters and context for one run.
pub struct Driver {
    pub agent: Box<dyn Agent>,
    pub runner: Box<dyn TestRunner>,
    pub issue: IssueContext,
    /// Where plan files go; `None` keeps plans in the event log only.
    pub plans_dir: Option<PathBuf>,
    pub guidance: Guidance,
}

/// Agent-facing view of an issue.
pub fn issue_context(bundle: &ArtifactBundle, issue_id: &str) -> Result<IssueContext, EngineError> {
    let issue = bundle
        .issue(issue_id)
        .ok_or_else(|| EngineError::UnknownIssue(issue_id.to_owned()))?;
    Ok(IssueContext {
        id: issue.id.clone(),
        title: issue.title.clone(),
        description: issue.description.clone(),
        constraint_tests: issue
            .constraint_test_ids
            .iter()
            .filter_map(|id| bundle.test(id).cloned())
            .collect(),
        c4: bundle.c4.clone(),
        adrs: bundle.adrs.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopRun {
    pub issue_ref: String,
    pub phase_ref: String,
    pub constraints: Vec<String>,
    pub config: LoopConfig,
    pub state: LoopState,
    /// Generate calls so far.
    pub iteration: u32,
    pub passing: Vec<String>,
    pub plan: Option<String>,
    pub last_outcomes: Vec<TestOutcome>,
    pub events: Vec<LoopEvent>,
}

/// Start a run. Fails without side effects if the issue is closed or any
/// phase its phase depends on still has unclosed issues.
pub fn open_issue(bundle: &ArtifactBundle, issue_id: &str, config: LoopConfig) -> Result<LoopRun, EngineError> {
    open_issue_after(bundle, issue_id, config, 0)
}

/// As [`open_issue`], numbering events after `last_seq` so several runs can
/// share one log.
pub fn open_issue_after(
    bundle: &ArtifactBundle,
    issue_id: &str,
    config: LoopConfig,
    last_seq: u64,
) -> Result<LoopRun, EngineError> {
    if config.max_iterations == 0 {
        return Err(EngineError::InvalidConfig);
    }
    let issue = bundle
        .issue(issue_id)
        .ok_or_else(|| EngineError::UnknownIssue(issue_id.to_owned()))?;
    if issue.status == IssueStatus::Closed {
        return Err(EngineError::IssueClosed(issue.id.clone()));
    }
    if issue.constraint_test_ids.is_empty() {
        return Err(EngineError::NoConstraints(issue.id.clone()));
    }
    let mut blocking: Vec<String> = bundle
        .phase(&issue.phase_ref)
        .map(|p| p.depends_on.clone())
        .unwrap_or_default()
        .into_iter()
        .filter(|dep| bundle.issues_in_phase(dep).any(|i| i.status != IssueStatus::Closed))
        .collect();
    if !blocking.is_empty() {
        sort_natural(&mut blocking);
        blocking.dedup();
        return Err(EngineError::DependencyNotSatisfied {
            issue: issue.id.clone(),
            blocking,
        });
    }
    Ok(LoopRun::begin(
        &issue.id,
        &issue.phase_ref,
        issue.constraint_test_ids.clone(),
        config,
        last_seq,
    ))
}

impl LoopRun {
    /// A fresh run with its `opened` event, without any bundle checks.
    pub fn begin(issue: &str, phase: &str, mut constraints: Vec<String>, config: LoopConfig, last_seq: u64) -> LoopRun {
        sort_natural(&mut constraints);
        constraints.dedup();
        let mut run = LoopRun {
            issue_ref: issue.to_owned(),
            phase_ref: phase.to_owned(),
            constraints,
            config,
            state: LoopState::IssueOpened,
            iteration: 0,
            passing: Vec::new(),
            plan: None,
            last_outcomes: Vec::new(),
            events: Vec::new(),
        };
        let payload = json!({
            "phase": run.phase_ref,
            "constraints": run.constraints,
            "config": run.config,
        });
        run.events
            .push(LoopEvent::new(last_seq + 1, &run.issue_ref, kind::OPENED, payload));
        run
    }

    fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    fn log(&mut self, kind: &str, payload: Value) {
        let e = LoopEvent::new(self.next_seq(), &self.issue_ref, kind, payload);
        self.events.push(e);
    }

    fn enter(&mut self, next: LoopState) {
        debug_assert!(self.state.can_move_to(next), "{} -> {}", self.state, next);
        self.state = next;
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn all_passing(&self) -> bool {
        self.passing.len() == self.constraints.len()
    }

    pub fn failing_outcomes(&self) -> Vec<TestOutcome> {
        self.last_outcomes.iter().filter(|o| !o.passed()).cloned().collect()
    }

    /// Constraint tests not currently passing.
    pub fn failing(&self) -> Vec<String> {
        let passing: BTreeSet<&str> = self.passing.iter().map(String::as_str).collect();
        self.constraints
            .iter()
            .filter(|t| !passing.contains(t.as_str()))
            .cloned()
            .collect()
    }

    pub fn plan_path(&self) -> String {
        format!("plans/{}-iter{}.md", self.issue_ref, self.iteration)
    }

    pub fn draft_plan(&mut self, driver: &mut Driver) -> Result<(), EngineError> {
        if self.state != LoopState::IssueOpened {
            return Err(EngineError::WrongState {
                op: "draft a plan",
                state: self.state,
            });
        }
        let plan = match driver.agent.draft_plan(&driver.issue) {
            Ok(p) if p.trim().is_empty() => Err(EngineError::EmptyPlan),
            Ok(p) => Ok(p),
            Err(e) => Err(EngineError::Agent(e)),
        };
        let plan = match plan {
            Ok(p) => p,
            Err(e) => {
                self.log(kind::AGENT_FAILED, json!({"op": "draft_plan", "code": e.code(), "error": e.to_string()}));
                return Err(e);
            }
        };
        let path = self.plan_path();
        if let Some(dir) = &driver.plans_dir {
            let file = dir.join(path.trim_start_matches("plans/"));
            std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(&file, &plan))
                .map_err(|e| EngineError::PlanWrite {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
        }
        self.log(
            kind::PLAN_DRAFTED,
            json!({"iteration": self.iteration, "path": path, "plan": plan}),
        );
        self.plan = Some(plan);
        self.enter(LoopState::PlanDrafted);
        if !self.config.require_plan_approval {
            self.approve_as("auto")?;
        }
        Ok(())
    }

    /// Human approval of the drafted plan.
    pub fn approve_plan(&mut self) -> Result<(), EngineError> {
        self.approve_as("human")
    }

    fn approve_as(&mut self, actor: &str) -> Result<(), EngineError> {
        if self.state != LoopState::PlanDrafted {
            return Err(EngineError::WrongState {
                op: "approve the plan",
                state: self.state,
            });
        }
        self.log(kind::PLAN_APPROVED, json!({"actor": actor}));
        self.enter(LoopState::PlanApproved);
        Ok(())
    }

    /// One generate call. `feedback` should hold the failing outcomes of the
    /// previous run; it is withheld from the agent under
    /// [`Guidance::PromptOnly`].
    pub fn generate(&mut self, driver: &mut Driver, feedback: Option<Vec<TestOutcome>>) -> Result<(), EngineError> {
        let allowed = match self.state {
            LoopState::PlanApproved => true,
            LoopState::TestsRun => !self.all_passing(),
            _ => false,
        };
        if !allowed {
            return Err(EngineError::WrongState {
                op: "generate code",
                state: self.state,
            });
        }
        if self.iteration >= self.config.max_iterations {
            let failing = self.failing();
            self.log(kind::STALLED, json!({"iteration": self.iteration, "failing": failing}));
            self.enter(LoopState::Stalled);
            return Ok(());
        }
        let guided = driver.guidance == Guidance::Guardrail;
        let request = GenerateRequest {
            issue: &driver.issue,
            plan: self.plan.as_deref().filter(|_| guided),
            feedback: feedback.as_deref().filter(|_| guided),
        };
        let changes = match driver.agent.generate(&request) {
            Ok(c) => c,
            Err(e) => {
                let e = EngineError::Agent(e);
                self.log(kind::AGENT_FAILED, json!({"op": "generate", "code": e.code(), "error": e.to_string()}));
                return Err(e);
            }
        };
        let fed: Vec<&str> = request
            .feedback
            .unwrap_or_default()
            .iter()
            .map(|o| o.test_id.as_str())
            .collect();
        self.iteration += 1;
        self.log(
            kind::CODE_GENERATED,
            json!({
                "iteration": self.iteration,
                "summary": changes.summary,
                "files": changes.files,
                "feedback": fed,
            }),
        );
        self.enter(LoopState::CodeGenerated);
        Ok(())
    }

    /// Run exactly the constraint tests.
    pub fn run_tests(&mut self, driver: &mut Driver) -> Result<(), EngineError> {
        if self.state != LoopState::CodeGenerated {
            return Err(EngineError::WrongState {
                op: "run tests",
                state: self.state,
            });
        }
        let outcomes = match self.checked_outcomes(driver) {
            Ok(o) => o,
            Err(e) => {
                self.log(kind::RUNNER_ERROR, json!({"code": e.code(), "error": e.to_string()}));
                return Err(e);
            }
        };
        let mut passing: Vec<String> = outcomes.iter().filter(|o| o.passed()).map(|o| o.test_id.clone()).collect();
        sort_natural(&mut passing);
        self.log(kind::TESTS_RUN, json!({"outcomes": outcomes, "passing": passing}));
        self.passing = passing;
        self.last_outcomes = outcomes;
        self.enter(LoopState::TestsRun);
        Ok(())
    }

    fn checked_outcomes(&self, driver: &mut Driver) -> Result<Vec<TestOutcome>, EngineError> {
        let outcomes = driver.runner.run(&self.constraints)?;
        if let Some(o) = outcomes
            .iter()
            .find(|o| self.constraints.binary_search_by(|c| natural_cmp(c, &o.test_id)).is_err())
        {
            return Err(EngineError::ForeignTestId(o.test_id.clone()));
        }
        Ok(crate::adapters::conform(&self.constraints, outcomes)?)
    }

    /// Advance one transition. A drafted plan waits for [`approve_plan`].
    ///
    /// [`approve_plan`]: LoopRun::approve_plan
    pub fn step(&mut self, driver: &mut Driver) -> Result<(), EngineError> {
        match self.state {
            LoopState::IssueClosed | LoopState::Stalled => Err(EngineError::Terminal(self.state)),
            LoopState::IssueOpened => self.draft_plan(driver),
            LoopState::PlanDrafted => Err(EngineError::AwaitingApproval),
            LoopState::PlanApproved => self.generate(driver, None),
            LoopState::CodeGenerated => self.run_tests(driver),
            LoopState::TestsRun if self.all_passing() => {
                self.log(kind::CLOSED, json!({"iteration": self.iteration, "passing": self.passing}));
                self.enter(LoopState::IssueClosed);
                Ok(())
            }
            LoopState::TestsRun => {
                let feedback = self.failing_outcomes();
                self.generate(driver, Some(feedback))
            }
        }
    }

    /// Step until closed or stalled. A pending plan is approved on the
    /// human's behalf, which is all the human does in this loop.
    pub fn run_to_completion(&mut self, driver: &mut Driver) -> Result<(), EngineError> {
        if self.state.is_terminal() {
            return Err(EngineError::Terminal(self.state));
        }
        while !self.state.is_terminal() {
            if self.state == LoopState::PlanDrafted {
                self.approve_plan()?;
            } else {
                self.step(driver)?;
            }
        }
        Ok(())
    }

    /// Rebuild a run from its event log.
    pub fn replay(events: &[LoopEvent]) -> Result<LoopRun, EngineError> {
        let bad = |seq: u64, message: String| EngineError::Replay { seq, message };
        let first = events.first().ok_or_else(|| bad(0, "empty log".into()))?;
        if first.kind != kind::OPENED {
            return Err(bad(first.seq, format!("first event is `{}`, not `opened`", first.kind)));
        }
        let field = |e: &LoopEvent, name: &str| -> Result<Value, EngineError> {
            e.payload
                .get(name)
                .cloned()
                .ok_or_else(|| bad(e.seq, format!("payload lacks `{name}`")))
        };
        fn parse<T: serde::de::DeserializeOwned>(seq: u64, v: Value) -> Result<T, EngineError> {
            serde_json::from_value(v).map_err(|e| EngineError::Replay {
                seq,
                message: e.to_string(),
            })
        }
        let mut run = LoopRun {
            issue_ref: first.issue.clone(),
            phase_ref: parse(first.seq, field(first, "phase")?)?,
            constraints: parse(first.seq, field(first, "constraints")?)?,
            config: parse(first.seq, field(first, "config")?)?,
            state: LoopState::IssueOpened,
            iteration: 0,
            passing: Vec::new(),
            plan: None,
            last_outcomes: Vec::new(),
            events: vec![first.clone()],
        };
        for e in &events[1..] {
            if e.seq <= run.last_seq() {
                return Err(bad(e.seq, "sequence number does not increase".into()));
            }
            if e.issue != run.issue_ref {
                return Err(bad(e.seq, format!("event for `{}` in log of `{}`", e.issue, run.issue_ref)));
            }
            let next = match e.kind.as_str() {
                kind::PLAN_DRAFTED => {
                    run.plan = Some(parse(e.seq, field(e, "plan")?)?);
                    Some(LoopState::PlanDrafted)
                }
                kind::PLAN_APPROVED => Some(LoopState::PlanApproved),
                kind::CODE_GENERATED => {
                    run.iteration = parse(e.seq, field(e, "iteration")?)?;
                    Some(LoopState::CodeGenerated)
                }
                kind::TESTS_RUN => {
                    run.last_outcomes = parse(e.seq, field(e, "outcomes")?)?;
                    run.passing = parse(e.seq, field(e, "passing")?)?;
                    Some(LoopState::TestsRun)
                }
                kind::CLOSED => Some(LoopState::IssueClosed),
                kind::STALLED => Some(LoopState::Stalled),
                kind::AGENT_FAILED | kind::RUNNER_ERROR => None,
                other => return Err(bad(e.seq, format!("unknown event kind `{other}`"))),
            };
            if let Some(next) = next {
                if !run.state.can_move_to(next) {
                    return Err(bad(e.seq, format!("illegal transition {} -> {next}", run.state)));
                }
                run.state = next;
            }
            run.events.push(e.clone());
        }
        Ok(run)
    }
}

/// Events of the most recent run of `issue` in a shared log.
pub fn latest_run_events(events: &[LoopEvent], issue: &str) -> Vec<LoopEvent> {
    let mine: Vec<&LoopEvent> = events.iter().filter(|e| e.issue == issue).collect();
    let start = mine.iter().rposition(|e| e.kind == kind::OPENED).unwrap_or(0);
    mine[start..].iter().map(|e| (*e).clone()).collect()
}
