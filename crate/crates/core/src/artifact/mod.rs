//! The guardrail artifacts and the on-disk project bundle.
//!
//! A project is a directory with a `shiftup.json` manifest and one file
//! family per artifact kind:
//!
//! ```text
//! shiftup.json
//! requirements/requirements.json
//! stories/stories.json
//! tests/*.gwt
//! architecture/c4.json
//! architecture/adr/<id>-<slug>.md
//! roadmap/phases.json
//! issues/*.json
//! logs/*.jsonl
//! ```

mod adr;
mod store;
mod validate;

use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use adr::{parse_adr, render_adr, slug};
pub use store::{load_bundle, save_bundle, write_issue, LoadError, SaveError};
pub use validate::{validate, Rule, Violation};

use crate::config::ProjectConfig;
use crate::ids::natural_cmp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementKind {
    Functional,
    NonFunctional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub id: String,
    pub kind: RequirementKind,
    pub text: String,
}

/// "As a <as_a>, I want <i_want>, so that <so_that>".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserStory {
    pub id: String,
    pub as_a: String,
    pub i_want: String,
    pub so_that: String,
    #[serde(default)]
    pub requirement_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    Given,
    When,
    Then,
}

impl ClauseKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ClauseKind::Given => "Given",
            ClauseKind::When => "When",
            ClauseKind::Then => "Then",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub kind: ClauseKind,
    pub text: String,
}

impl Clause {
    pub fn new(kind: ClauseKind, text: impl Into<String>) -> Self {
        Clause {
            kind,
            text: text.into(),
        }
    }
}

/// One executable acceptance test in given-when-then form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceTest {
    pub id: String,
    pub story_ref: String,
    pub name: String,
    pub clauses: Vec<Clause>,
}

impl AcceptanceTest {
    pub fn clauses_of(&self, kind: ClauseKind) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(move |c| c.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C4Level {
    Context,
    Container,
    Component,
    Code,
}

impl C4Level {
    pub fn as_str(self) -> &'static str {
        match self {
            C4Level::Context => "context",
            C4Level::Container => "container",
            C4Level::Component => "component",
            C4Level::Code => "code",
        }
    }

    /// The level a parent of this level must have.
    pub fn parent_level(self) -> Option<C4Level> {
        match self {
            C4Level::Context => None,
            C4Level::Container => Some(C4Level::Context),
            C4Level::Component => Some(C4Level::Container),
            C4Level::Code => Some(C4Level::Component),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C4Element {
    pub id: String,
    pub name: String,
    pub level: C4Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C4Relation {
    pub from: String,
    pub to: String,
    pub label: String,
}

/// Maps a source path prefix to the element that owns it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathMapping {
    pub path_prefix: String,
    pub element_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C4Model {
    #[serde(default)]
    pub elements: Vec<C4Element>,
    #[serde(default)]
    pub relations: Vec<C4Relation>,
    #[serde(default)]
    pub path_mappings: Vec<PathMapping>,
}

impl C4Model {
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty() && self.relations.is_empty() && self.path_mappings.is_empty()
    }

    pub fn element(&self, id: &str) -> Option<&C4Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    /// Element owning `path`, by longest matching prefix.
    pub fn element_for_path(&self, path: &str) -> Option<&C4Element> {
        self.path_mappings
            .iter()
            .filter(|m| path.starts_with(&m.path_prefix))
            .max_by_key(|m| m.path_prefix.len())
            .and_then(|m| self.element(&m.element_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdrStatus {
    Proposed,
    Accepted,
    Deprecated,
    Superseded,
}

impl AdrStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AdrStatus::Proposed => "proposed",
            AdrStatus::Accepted => "accepted",
            AdrStatus::Deprecated => "deprecated",
            AdrStatus::Superseded => "superseded",
        }
    }

    pub fn parse(s: &str) -> Option<AdrStatus> {
        match s {
            "proposed" => Some(AdrStatus::Proposed),
            "accepted" => Some(AdrStatus::Accepted),
            "deprecated" => Some(AdrStatus::Deprecated),
            "superseded" => Some(AdrStatus::Superseded),
            _ => None,
        }
    }
}

/// Architecture decision record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdRecord {
    pub id: String,
    pub title: String,
    pub status: AdrStatus,
    pub date: NaiveDate,
    pub context: String,
    pub decision: String,
    pub consequences: String,
    pub supersedes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadmapPhase {
    pub id: String,
    pub name: String,
    pub goal: String,
    #[serde(default)]
    pub architecture_tasks: Vec<String>,
    pub test_ids: Vec<String>,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueStatus {
    #[default]
    Open,
    InProgress,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkIssue {
    pub id: String,
    pub phase_ref: String,
    pub title: String,
    pub description: String,
    /// Tests that must pass for the issue to close.
    pub constraint_test_ids: Vec<String>,
    #[serde(default)]
    pub context_links: Vec<String>,
    #[serde(default)]
    pub status: IssueStatus,
}

/// A whole project as loaded from disk.
///
/// Equality ignores `root`: two bundles are equal when their content is.
#[derive(Debug, Clone)]
pub struct ArtifactBundle {
    pub root: PathBuf,
    pub config: ProjectConfig,
    pub requirements: Vec<Requirement>,
    pub stories: Vec<UserStory>,
    pub tests: Vec<AcceptanceTest>,
    pub c4: C4Model,
    pub adrs: Vec<AdRecord>,
    pub phases: Vec<RoadmapPhase>,
    pub issues: Vec<WorkIssue>,
}

impl PartialEq for ArtifactBundle {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.requirements == other.requirements
            && self.stories == other.stories
            && self.tests == other.tests
            && self.c4 == other.c4
            && self.adrs == other.adrs
            && self.phases == other.phases
            && self.issues == other.issues
    }
}

impl ArtifactBundle {
    pub fn empty(root: impl Into<PathBuf>, config: ProjectConfig) -> Self {
        ArtifactBundle {
            root: root.into(),
            config,
            requirements: Vec::new(),
            stories: Vec::new(),
            tests: Vec::new(),
            c4: C4Model::default(),
            adrs: Vec::new(),
            phases: Vec::new(),
            issues: Vec::new(),
        }
    }

    /// Sort every id-keyed collection into natural id order, the order
    /// `load_bundle` produces.
    pub fn normalize(&mut self) {
        self.requirements.sort_by(|a, b| natural_cmp(&a.id, &b.id));
        self.stories.sort_by(|a, b| natural_cmp(&a.id, &b.id));
        self.tests.sort_by(|a, b| natural_cmp(&a.id, &b.id));
        self.adrs.sort_by(|a, b| natural_cmp(&a.id, &b.id));
        self.phases.sort_by(|a, b| natural_cmp(&a.id, &b.id));
        self.issues.sort_by(|a, b| natural_cmp(&a.id, &b.id));
    }

    pub fn story(&self, id: &str) -> Option<&UserStory> {
        self.stories.iter().find(|s| s.id == id)
    }

    pub fn test(&self, id: &str) -> Option<&AcceptanceTest> {
        self.tests.iter().find(|t| t.id == id)
    }

    pub fn phase(&self, id: &str) -> Option<&RoadmapPhase> {
        self.phases.iter().find(|p| p.id == id)
    }

    pub fn issue(&self, id: &str) -> Option<&WorkIssue> {
        self.issues.iter().find(|i| i.id == id)
    }

    pub fn issue_mut(&mut self, id: &str) -> Option<&mut WorkIssue> {
        self.issues.iter_mut().find(|i| i.id == id)
    }

    pub fn issues_in_phase<'a>(&'a self, phase: &'a str) -> impl Iterator<Item = &'a WorkIssue> {
        self.issues.iter().filter(move |i| i.phase_ref == phase)
    }
}
