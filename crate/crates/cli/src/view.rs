//! JSON shapes shared by `--format json` output and the HTTP API.

use serde::Serialize;
use shiftup_core::adapters::TestOutcome;
use shiftup_core::artifact::{validate, IssueStatus};
use shiftup_core::engine::{LoopRun, LoopState};
use shiftup_core::ArtifactBundle;

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub issue: String,
    pub phase: String,
    pub state: LoopState,
    pub iteration: u32,
    pub constraints: Vec<String>,
    pub passing: Vec<String>,
    pub failing: Vec<String>,
    pub plan: Option<String>,
    pub last_outcomes: Vec<TestOutcome>,
    pub last_seq: u64,
}

impl From<&LoopRun> for RunSummary {
    fn from(run: &LoopRun) -> Self {
        RunSummary {
            issue: run.issue_ref.clone(),
            phase: run.phase_ref.clone(),
            state: run.state,
            iteration: run.iteration,
            constraints: run.constraints.clone(),
            passing: run.passing.clone(),
            failing: run.failing(),
            plan: run.plan.clone(),
            last_outcomes: run.last_outcomes.clone(),
            last_seq: run.last_seq(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Counts {
    pub requirements: usize,
    pub stories: usize,
    pub tests: usize,
    pub adrs: usize,
    pub phases: usize,
    pub issues: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BundleSummary {
    pub name: String,
    pub counts: Counts,
    pub violations: usize,
    pub open_issues: usize,
    pub closed_issues: usize,
}

impl From<&ArtifactBundle> for BundleSummary {
    fn from(b: &ArtifactBundle) -> Self {
        let closed = b.issues.iter().filter(|i| i.status == IssueStatus::Closed).count();
        BundleSummary {
            name: b.config.name.clone(),
            counts: Counts {
                requirements: b.requirements.len(),
                stories: b.stories.len(),
                tests: b.tests.len(),
                adrs: b.adrs.len(),
                phases: b.phases.len(),
                issues: b.issues.len(),
            },
            violations: validate(b).len(),
            open_issues: b.issues.len() - closed,
            closed_issues: closed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IssueView {
    pub id: String,
    pub title: String,
    pub phase: String,
    pub status: IssueStatus,
    pub constraints: Vec<String>,
    /// State of the latest recorded run, if any.
    pub loop_state: Option<LoopState>,
}
