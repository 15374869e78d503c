use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::adr::{parse_adr, render_adr, slug};
use super::validate::{validate, Violation};
use super::{AcceptanceTest, ArtifactBundle, C4Model, WorkIssue};
use crate::config::{ProjectConfig, MANIFEST_FILE};
use crate::gwt::{parse_gwt, render_tests};
use crate::ids::{natural_cmp, NaturalKey};

pub const REQUIREMENTS_FILE: &str = "requirements/requirements.json";
pub const STORIES_FILE: &str = "stories/stories.json";
pub const TESTS_DIR: &str = "tests";
pub const C4_FILE: &str = "architecture/c4.json";
pub const ADR_DIR: &str = "architecture/adr";
pub const PHASES_FILE: &str = "roadmap/phases.json";
pub const ISSUES_DIR: &str = "issues";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("no project manifest at {}", .0.display())]
    MissingManifest(PathBuf),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(Violation),
}

impl LoadError {
    /// True for failures of the environment rather than of the content.
    pub fn is_environment(&self) -> bool {
        matches!(self, LoadError::MissingManifest(_) | LoadError::Io { .. })
    }
}

#[derive(Debug, Error)]
pub enum SaveError {
    #[error("refusing to save an invalid bundle ({} violations)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
}

/// Load and cross-check a project directory.
///
/// Every file is read even after a failure; on error the complete list is
/// returned. Files that fail to parse suppress bundle-level validation, since
/// references into a broken file would only produce noise.
pub fn load_bundle(root: impl AsRef<Path>) -> Result<ArtifactBundle, Vec<LoadError>> {
    let root = root.as_ref();
    let manifest = root.join(MANIFEST_FILE);
    if !manifest.is_file() {
        return Err(vec![LoadError::MissingManifest(manifest)]);
    }
    let mut errors = Vec::new();
    let mut ld = Loader {
        root,
        errors: &mut errors,
    };

    let config: Option<ProjectConfig> = ld.json(MANIFEST_FILE, false);
    let requirements = ld.json(REQUIREMENTS_FILE, true).unwrap_or_default();
    let stories = ld.json(STORIES_FILE, true).unwrap_or_default();
    let c4: C4Model = ld.json(C4_FILE, true).unwrap_or_default();
    let phases = ld.json(PHASES_FILE, true).unwrap_or_default();

    let mut tests = Vec::new();
    for path in ld.list(TESTS_DIR, "gwt") {
        if let Some(text) = ld.read(&path) {
            match parse_gwt(&text) {
                Ok(file) => tests.extend(file.tests),
                Err(errs) => ld.errors.extend(errs.into_iter().map(|e| LoadError::Malformed {
                    path: path.clone(),
                    line: e.line,
                    message: e.message,
                })),
            }
        }
    }

    let mut adrs = Vec::new();
    for path in ld.list(ADR_DIR, "md") {
        if let Some(text) = ld.read(&path) {
            match parse_adr(&text) {
                Ok(adr) => adrs.push(adr),
                Err((line, message)) => ld.errors.push(LoadError::Malformed {
                    path: path.clone(),
                    line,
                    message,
                }),
            }
        }
    }

    let mut issues = Vec::new();
    for path in ld.list(ISSUES_DIR, "json") {
        let rel = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
        if let Some(issue) = ld.json::<WorkIssue>(&rel, false) {
            issues.push(issue);
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    let mut bundle = ArtifactBundle {
        root: root.to_path_buf(),
        config: config.expect("manifest parsed without error"),
        requirements,
        stories,
        tests,
        c4,
        adrs,
        phases,
        issues,
    };
    bundle.normalize();
    let violations = validate(&bundle);
    if violations.is_empty() {
        Ok(bundle)
    } else {
        Err(violations.into_iter().map(LoadError::Invalid).collect())
    }
}

struct Loader<'a> {
    root: &'a Path,
    errors: &'a mut Vec<LoadError>,
}

impl Loader<'_> {
    fn read(&mut self, path: &Path) -> Option<String> {
        match fs::read_to_string(path) {
            Ok(s) => Some(s),
            Err(e) => {
                self.errors.push(LoadError::Io {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                });
                None
            }
        }
    }

    /// Parse a JSON file relative to the root. A missing optional file
    /// yields `None` without an error.
    fn json<T: DeserializeOwned>(&mut self, rel: impl AsRef<Path>, optional: bool) -> Option<T> {
        let path = self.root.join(rel);
        if optional && !path.exists() {
            return None;
        }
        let text = self.read(&path)?;
        match serde_json::from_str(&text) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(LoadError::Malformed {
                    path,
                    line: e.line().max(1),
                    message: e.to_string(),
                });
                None
            }
        }
    }

    /// Files with `ext` directly inside `rel`, sorted by name.
    fn list(&mut self, rel: &str, ext: &str) -> Vec<PathBuf> {
        let dir = self.root.join(rel);
        if !dir.exists() {
            return Vec::new();
        }
        match fs::read_dir(&dir) {
            Ok(entries) => {
                let mut out: Vec<PathBuf> = entries
                    .filter_map(Result::ok)
                    .map(|e| e.path())
                    .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == ext))
                    .collect();
                out.sort();
                out
            }
            Err(e) => {
                self.errors.push(LoadError::Io {
                    path: dir,
                    message: e.to_string(),
                });
                Vec::new()
            }
        }
    }
}

/// Canonical JSON: sorted keys, two-space indentation, trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("artifact types serialize");
    let mut s = serde_json::to_string_pretty(&value).expect("values serialize");
    s.push('\n');
    s
}

/// Write a bundle in canonical form.
///
/// Tests are grouped into one `tests/<story>.gwt` file per story; issues and
/// ADRs get one file each. Stale files in those managed directories are
/// removed. Callers must serialize saves per root.
pub fn save_bundle(bundle: &ArtifactBundle, root: impl AsRef<Path>) -> Result<(), SaveError> {
    let violations = validate(bundle);
    if !violations.is_empty() {
        return Err(SaveError::Invalid(violations));
    }
    let root = root.as_ref();
    let mut canonical = bundle.clone();
    canonical.normalize();
    let b = &canonical;

    write(root, MANIFEST_FILE, &canonical_json(&b.config))?;
    write(root, REQUIREMENTS_FILE, &canonical_json(&b.requirements))?;
    write(root, STORIES_FILE, &canonical_json(&b.stories))?;
    write(root, C4_FILE, &canonical_json(&b.c4))?;
    write(root, PHASES_FILE, &canonical_json(&b.phases))?;

    let mut by_story: BTreeMap<NaturalKey, Vec<&AcceptanceTest>> = BTreeMap::new();
    for t in &b.tests {
        by_story.entry(NaturalKey(t.story_ref.clone())).or_default().push(t);
    }
    let mut keep = BTreeSet::new();
    for (story, tests) in &by_story {
        let name = format!("{story}.gwt");
        write(root, &format!("{TESTS_DIR}/{name}"), &render_tests(tests.iter().copied()))?;
        keep.insert(name);
    }
    prune(root, TESTS_DIR, "gwt", &keep)?;

    let mut keep = BTreeSet::new();
    for adr in &b.adrs {
        let s = slug(&adr.title);
        let name = if s.is_empty() {
            format!("{}.md", adr.id)
        } else {
            format!("{}-{s}.md", adr.id)
        };
        write(root, &format!("{ADR_DIR}/{name}"), &render_adr(adr))?;
        keep.insert(name);
    }
    prune(root, ADR_DIR, "md", &keep)?;

    let mut keep = BTreeSet::new();
    for issue in &b.issues {
        write_issue(root, issue)?;
        keep.insert(format!("{}.json", issue.id));
    }
    prune(root, ISSUES_DIR, "json", &keep)?;
    Ok(())
}

/// Write a single issue file, e.g. after a status change.
pub fn write_issue(root: impl AsRef<Path>, issue: &WorkIssue) -> Result<(), SaveError> {
    write(
        root.as_ref(),
        &format!("{ISSUES_DIR}/{}.json", issue.id),
        &canonical_json(issue),
    )
}

fn write(root: &Path, rel: &str, contents: &str) -> Result<(), SaveError> {
    let path = root.join(rel);
    let wrap = |source| SaveError::Write {
        path: path.clone(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(wrap)?;
    }
    fs::write(&path, contents).map_err(wrap)
}

fn prune(root: &Path, rel: &str, ext: &str, keep: &BTreeSet<String>) -> Result<(), SaveError> {
    let dir = root.join(rel);
    let Ok(entries) = fs::read_dir(&dir) else {
        return Ok(());
    };
    let mut stale: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| !keep.contains(n))
        })
        .collect();
    stale.sort_by(|a, b| natural_cmp(&a.to_string_lossy(), &b.to_string_lossy()));
    for p in stale {
        fs::remove_file(&p).map_err(|source| SaveError::Write { path: p, source })?;
    }
    Ok(())
}
