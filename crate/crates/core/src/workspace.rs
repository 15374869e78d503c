//! Loop sessions bound to a project directory: adapters built from the
//! manifest, events appended to the shared log, issue status written back.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::adapters::{CommandAgent, CommandRunner, MockAgent, MockRunner, MockWorld};
use crate::artifact::{write_issue, ArtifactBundle, IssueStatus, SaveError, WorkIssue};
use crate::config::AdapterKind;
use crate::engine::{
    append_events, issue_context, latest_run_events, open_issue_after, read_events, Driver, EngineError, Guidance,
    LoopEvent, LoopRun, LoopState,
};

pub const EVENTS_LOG: &str = "logs/loop-events.jsonl";
pub const PROMPTS_LOG: &str = "logs/prompts.jsonl";
pub const PLANS_DIR: &str = "plans";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("adapter setup: {0}")]
    Adapter(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Save(#[from] SaveError),
}

impl WorkspaceError {
    pub fn engine(&self) -> Option<&EngineError> {
        match self {
            WorkspaceError::Engine(e) => Some(e),
            _ => None,
        }
    }
}

pub fn events_path(root: &Path) -> PathBuf {
    root.join(EVENTS_LOG)
}

pub fn load_events(root: &Path) -> Result<Vec<LoopEvent>, WorkspaceError> {
    let path = events_path(root);
    read_events(&path).map_err(|e| WorkspaceError::Io {
        path,
        message: e.to_string(),
    })
}

/// Adapters for one issue as configured in the manifest.
pub fn build_driver(bundle: &ArtifactBundle, issue_id: &str) -> Result<Driver, WorkspaceError> {
    let issue = issue_context(bundle, issue_id)?;
    let agent_cfg = &bundle.config.agent;
    let (agent, runner): (Box<dyn crate::adapters::Agent>, Box<dyn crate::adapters::TestRunner>) = match agent_cfg
        .adapter
    {
        AdapterKind::Mock => {
            agent_cfg
                .mock
                .validate()
                .map_err(|e| WorkspaceError::Adapter(e.to_string()))?;
            let world = MockWorld::new(issue.constraint_ids()).shared();
            (
                Box::new(MockAgent::new(agent_cfg.mock, world.clone())),
                Box::new(MockRunner::new(world)),
            )
        }
        AdapterKind::Command => {
            let cmd = agent_cfg
                .command
                .as_ref()
                .ok_or_else(|| WorkspaceError::Adapter("agent.command is not configured".into()))?;
            let runner_cfg = bundle
                .config
                .runner
                .as_ref()
                .ok_or_else(|| WorkspaceError::Adapter("runner is not configured".into()))?;
            let agent = CommandAgent::new(cmd).map_err(|e| WorkspaceError::Adapter(e.to_string()))?;
            let runner = CommandRunner::new(runner_cfg).map_err(|e| WorkspaceError::Adapter(e.to_string()))?;
            (
                Box::new(agent.in_dir(&bundle.root)),
                Box::new(runner.in_dir(&bundle.root)),
            )
        }
    };
    Ok(Driver {
        agent,
        runner,
        issue,
        plans_dir: Some(bundle.root.join(PLANS_DIR)),
        guidance: Guidance::Guardrail,
    })
}

/// A live run plus everything needed to persist it.
pub struct Session {
    pub run: LoopRun,
    pub driver: Driver,
    issue: WorkIssue,
    root: PathBuf,
    persisted: usize,
}

impl Session {
    /// Open `issue_id`, mark it in progress and log the `opened` event.
    /// A refused open writes nothing.
    pub fn open(bundle: &ArtifactBundle, issue_id: &str) -> Result<Session, WorkspaceError> {
        let root = bundle.root.clone();
        let last_seq = load_events(&root)?
            .iter()
            .filter(|e| e.issue == issue_id)
            .map(|e| e.seq)
            .max()
            .unwrap_or(0);
        let run = open_issue_after(bundle, issue_id, bundle.config.loop_defaults, last_seq)?;
        let driver = build_driver(bundle, issue_id)?;
        let mut issue = bundle.issue(issue_id).expect("opened issues exist").clone();
        issue.status = IssueStatus::InProgress;
        write_issue(&root, &issue)?;
        let mut s = Session {
            run,
            driver,
            issue,
            root,
            persisted: 0,
        };
        s.persist()?;
        Ok(s)
    }

    pub fn issue(&self) -> &WorkIssue {
        &self.issue
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Events not yet written, then the issue file once closed.
    fn persist(&mut self) -> Result<(), WorkspaceError> {
        let path = events_path(&self.root);
        append_events(&path, &self.run.events[self.persisted..]).map_err(|e| WorkspaceError::Io {
            path,
            message: e.to_string(),
        })?;
        self.persisted = self.run.events.len();
        if self.run.state == LoopState::IssueClosed && self.issue.status != IssueStatus::Closed {
            self.issue.status = IssueStatus::Closed;
            write_issue(&self.root, &self.issue)?;
        }
        Ok(())
    }

    /// Apply one engine operation and persist whatever it logged, including
    /// failure events.
    fn apply(&mut self, op: impl FnOnce(&mut LoopRun, &mut Driver) -> Result<(), EngineError>) -> Result<(), WorkspaceError> {
        let result = op(&mut self.run, &mut self.driver);
        self.persist()?;
        result.map_err(WorkspaceError::from)
    }

    pub fn draft_plan(&mut self) -> Result<(), WorkspaceError> {
        self.apply(|run, d| run.draft_plan(d))
    }

    pub fn approve_plan(&mut self) -> Result<(), WorkspaceError> {
        self.apply(|run, _| run.approve_plan())
    }

    pub fn step(&mut self) -> Result<(), WorkspaceError> {
        self.apply(|run, d| run.step(d))
    }

    pub fn run_to_completion(&mut self) -> Result<(), WorkspaceError> {
        self.apply(|run, d| run.run_to_completion(d))
    }
}

/// The latest run of an issue as recorded in the log, if any.
pub fn replay_issue(root: &Path, issue_id: &str) -> Result<Option<LoopRun>, WorkspaceError> {
    let events = latest_run_events(&load_events(root)?, issue_id);
    if events.is_empty() {
        return Ok(None);
    }
    Ok(Some(LoopRun::replay(&events)?))
}
