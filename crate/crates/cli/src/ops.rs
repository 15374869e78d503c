//! Operations shared by the command line and the HTTP service, so both
//! drive the engine through the same code.

use std::fmt;
use std::path::Path;

use clap::{Args, ValueEnum};
use serde::Deserialize;
use shiftup_core::adapters::{AgentError, RunnerError};
use shiftup_core::artifact::LoadError;
use shiftup_core::config::AdapterKind;
use shiftup_core::engine::EngineError;
use shiftup_core::metrics::{
    distribution_report, read_prompt_log, DistributionReport, Paradigm, RuleTable, UncategorizedPrompts,
};
use shiftup_core::workspace::{Session, WorkspaceError};
use shiftup_core::{load_bundle, ArtifactBundle, ProjectConfig};

/// A failure of the project content or of the requested action, as opposed
/// to the environment. Maps to exit code 1.
#[derive(Debug)]
pub struct DomainFailure(pub String);

impl fmt::Display for DomainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DomainFailure {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentChoice {
    Mock,
    Command,
}

/// Per-run changes to the manifest's agent and loop settings.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopOverrides {
    #[arg(long, value_enum)]
    pub agent: Option<AgentChoice>,
    /// Mock agent seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "max-iter")]
    pub max_iterations: Option<u32>,
    #[arg(long = "p-target")]
    pub targeted_success_p: Option<f64>,
    #[arg(long = "p-untargeted")]
    pub untargeted_success_p: Option<f64>,
    #[arg(long = "regression-rate")]
    pub regression_rate: Option<f64>,
}

impl LoopOverrides {
    pub fn apply(&self, config: &mut ProjectConfig) -> Result<(), String> {
        if let Some(a) = self.agent {
            config.agent.adapter = match a {
                AgentChoice::Mock => AdapterKind::Mock,
                AgentChoice::Command => AdapterKind::Command,
            };
        }
        let mock = &mut config.agent.mock;
        if let Some(s) = self.seed {
            mock.seed = s;
        }
        if let Some(p) = self.targeted_success_p {
            mock.targeted_success_p = p;
        }
        if let Some(p) = self.untargeted_success_p {
            mock.untargeted_success_p = p;
        }
        if let Some(d) = self.regression_rate {
            mock.regression_rate = d;
        }
        mock.validate().map_err(|e| e.to_string())?;
        if let Some(n) = self.max_iterations {
            if n == 0 {
                return Err("max-iter must be at least 1".into());
            }
            config.loop_defaults.max_iterations = n;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum OpError {
    Bundle(Vec<LoadError>),
    Overrides(String),
    Workspace(WorkspaceError),
}

impl fmt::Display for OpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpError::Bundle(errors) => {
                write!(f, "cannot load project")?;
                for e in errors {
                    write!(f, "\n  {e}")?;
                }
                Ok(())
            }
            OpError::Overrides(m) => f.write_str(m),
            OpError::Workspace(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for OpError {}

impl From<WorkspaceError> for OpError {
    fn from(e: WorkspaceError) -> Self {
        OpError::Workspace(e)
    }
}

impl OpError {
    pub fn engine(&self) -> Option<&EngineError> {
        match self {
            OpError::Workspace(w) => w.engine(),
            _ => None,
        }
    }

    /// Whether the cause lies outside the project and the requested action.
    pub fn is_environment(&self) -> bool {
        match self {
            OpError::Bundle(errors) => errors.iter().any(LoadError::is_environment),
            OpError::Overrides(_) => false,
            OpError::Workspace(WorkspaceError::Engine(e)) => matches!(
                e,
                EngineError::Agent(AgentError::Spawn { .. })
                    | EngineError::Runner(RunnerError::Spawn { .. } | RunnerError::Io(_))
                    | EngineError::PlanWrite { .. }
            ),
            OpError::Workspace(_) => true,
        }
    }

    /// For `anyhow`: domain failures are tagged so they exit with 1.
    pub fn into_anyhow(self) -> anyhow::Error {
        if self.is_environment() {
            anyhow::Error::new(self)
        } else {
            anyhow::Error::new(DomainFailure(self.to_string()))
        }
    }
}

pub fn load_project(root: &Path) -> Result<ArtifactBundle, OpError> {
    load_bundle(root).map_err(OpError::Bundle)
}

/// Load the project, apply overrides and open a loop session on `issue`.
pub fn open_session(root: &Path, issue: &str, overrides: &LoopOverrides) -> Result<Session, OpError> {
    let mut bundle = load_project(root)?;
    overrides.apply(&mut bundle.config).map_err(OpError::Overrides)?;
    Ok(Session::open(&bundle, issue)?)
}

#[derive(Debug)]
pub enum ReportError {
    MissingLog(std::path::PathBuf),
    Log(shiftup_core::metrics::PromptError),
    Uncategorized(UncategorizedPrompts),
}

impl fmt::Display for ReportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportError::MissingLog(p) => write!(f, "no prompt log at {}", p.display()),
            ReportError::Log(e) => write!(f, "{e}"),
            ReportError::Uncategorized(u) => {
                write!(f, "{u}")?;
                for (pos, text) in &u.texts {
                    write!(f, "\n  #{pos}: {text}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ReportError {}

/// Distribution reports for the requested paradigms, in reporting order.
pub fn prompt_reports(log: &Path, only: Option<Paradigm>) -> Result<Vec<DistributionReport>, ReportError> {
    if !log.is_file() {
        return Err(ReportError::MissingLog(log.to_path_buf()));
    }
    let records = read_prompt_log(log).map_err(ReportError::Log)?;
    let rules = RuleTable::default();
    Paradigm::ALL
        .into_iter()
        .filter(|p| only.is_none_or(|o| o == *p))
        .map(|p| distribution_report(&records, p, &rules).map_err(ReportError::Uncategorized))
        .collect()
}
