//! Whole-bundle invariant checks.
//!
//! Validation never stops at the first problem. Each violated invariant is
//! reported once, against the artifact that owns the broken field, so that
//! `k` independent defects produce exactly `k` violations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::{AdrStatus, ArtifactBundle, ClauseKind};
use crate::graph::dependency_cycles;
use crate::ids::IdKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    IdFormat,
    DuplicateId,
    EmptyField,
    FieldFormat,
    DanglingReference,
    GwtMissingClauseKind,
    GwtClauseOrder,
    C4LevelOrder,
    C4DuplicatePathPrefix,
    AdrSupersedesSelf,
    AdrSupersededWithoutSuccessor,
    PhaseEmptyTests,
    PhaseSelfDependency,
    PhaseDependencyCycle,
    IssueEmptyConstraints,
    IssueConstraintOutsidePhase,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::IdFormat => "id-format",
            Rule::DuplicateId => "duplicate-id",
            Rule::EmptyField => "empty-field",
            Rule::FieldFormat => "field-format",
            Rule::DanglingReference => "dangling-reference",
            Rule::GwtMissingClauseKind => "gwt-missing-clause-kind",
            Rule::GwtClauseOrder => "gwt-clause-order",
            Rule::C4LevelOrder => "c4-level-order",
            Rule::C4DuplicatePathPrefix => "c4-duplicate-path-prefix",
            Rule::AdrSupersedesSelf => "adr-supersedes-self",
            Rule::AdrSupersededWithoutSuccessor => "adr-superseded-without-successor",
            Rule::PhaseEmptyTests => "phase-empty-tests",
            Rule::PhaseSelfDependency => "phase-self-dependency",
            Rule::PhaseDependencyCycle => "phase-dependency-cycle",
            Rule::IssueEmptyConstraints => "issue-empty-constraints",
            Rule::IssueConstraintOutsidePhase => "issue-constraint-outside-phase",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One broken invariant, attributed to an artifact id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub artifact: String,
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    fn new(artifact: &str, rule: Rule, detail: impl Into<String>) -> Self {
        Violation {
            artifact: artifact.to_owned(),
            rule,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.artifact, self.rule, self.detail)
    }
}

/// Check every bundle invariant. Returns an empty list iff the bundle is valid.
pub fn validate(bundle: &ArtifactBundle) -> Vec<Violation> {
    let mut v = Checker::default();

    let req_ids = v.ids(IdKind::Requirement, bundle.requirements.iter().map(|r| r.id.as_str()));
    let story_ids = v.ids(IdKind::Story, bundle.stories.iter().map(|s| s.id.as_str()));
    let test_ids = v.ids(IdKind::Test, bundle.tests.iter().map(|t| t.id.as_str()));
    let adr_ids = v.ids(IdKind::Adr, bundle.adrs.iter().map(|a| a.id.as_str()));
    let phase_ids = v.ids(IdKind::Phase, bundle.phases.iter().map(|p| p.id.as_str()));
    v.ids(IdKind::Issue, bundle.issues.iter().map(|i| i.id.as_str()));

    for r in &bundle.requirements {
        v.non_empty(&r.id, "text", &r.text);
    }

    for s in &bundle.stories {
        v.non_empty(&s.id, "as_a", &s.as_a);
        v.non_empty(&s.id, "i_want", &s.i_want);
        v.non_empty(&s.id, "so_that", &s.so_that);
        for r in &s.requirement_refs {
            v.reference(&s.id, r, &req_ids);
        }
    }

    for t in &bundle.tests {
        v.reference(&t.id, &t.story_ref, &story_ids);
        if v.non_empty(&t.id, "name", &t.name) {
            v.single_line(&t.id, "name", &t.name);
        }
        for c in &t.clauses {
            if v.non_empty(&t.id, "clause", &c.text) {
                v.single_line(&t.id, "clause", &c.text);
            }
        }
        let missing: Vec<&str> = [ClauseKind::Given, ClauseKind::When, ClauseKind::Then]
            .into_iter()
            .filter(|k| t.clauses_of(*k).next().is_none())
            .map(|k| k.keyword())
            .collect();
        if !missing.is_empty() {
            v.push(&t.id, Rule::GwtMissingClauseKind, format!("no {} clause", missing.join("/")));
        }
        if let Some(w) = t.clauses.windows(2).find(|w| w[1].kind < w[0].kind) {
            v.push(
                &t.id,
                Rule::GwtClauseOrder,
                format!("{} after {}", w[1].kind.keyword(), w[0].kind.keyword()),
            );
        }
    }

    check_c4(&mut v, bundle);
    check_adrs(&mut v, bundle, &adr_ids);

    for p in &bundle.phases {
        v.non_empty(&p.id, "name", &p.name);
        v.non_empty(&p.id, "goal", &p.goal);
        if p.test_ids.is_empty() {
            v.push(&p.id, Rule::PhaseEmptyTests, "phase lists no acceptance tests");
        }
        for t in &p.test_ids {
            v.reference(&p.id, t, &test_ids);
        }
        for d in &p.depends_on {
            if d == &p.id {
                v.push(&p.id, Rule::PhaseSelfDependency, "phase depends on itself");
            } else {
                v.reference(&p.id, d, &phase_ids);
            }
        }
    }
    for cycle in dependency_cycles(&bundle.phases) {
        v.push(&cycle[0], Rule::PhaseDependencyCycle, format!("cycle through {}", cycle.join(", ")));
    }

    let phase_tests: HashMap<&str, BTreeSet<&str>> = bundle
        .phases
        .iter()
        .map(|p| (p.id.as_str(), p.test_ids.iter().map(String::as_str).collect()))
        .collect();
    for i in &bundle.issues {
        v.non_empty(&i.id, "title", &i.title);
        let phase_ok = v.reference(&i.id, &i.phase_ref, &phase_ids);
        if i.constraint_test_ids.is_empty() {
            v.push(&i.id, Rule::IssueEmptyConstraints, "issue has no constraint tests");
        }
        for t in &i.constraint_test_ids {
            let resolves = v.reference(&i.id, t, &test_ids);
            if resolves && phase_ok {
                let in_phase = phase_tests
                    .get(i.phase_ref.as_str())
                    .is_some_and(|set| set.contains(t.as_str()));
                if !in_phase {
                    v.push(
                        &i.id,
                        Rule::IssueConstraintOutsidePhase,
                        format!("{t} is not a test of {}", i.phase_ref),
                    );
                }
            }
        }
    }

    v.out
}

fn check_c4(v: &mut Checker, bundle: &ArtifactBundle) {
    let c4 = &bundle.c4;
    let mut levels = BTreeMap::new();
    for e in &c4.elements {
        if e.id.is_empty() || e.id.chars().any(char::is_whitespace) {
            v.push(&e.id, Rule::IdFormat, format!("`{}` is not a valid element id", e.id));
        }
        if levels.insert(e.id.as_str(), e.level).is_some() {
            v.push(&e.id, Rule::DuplicateId, "duplicate C4 element id");
        }
        v.non_empty(&e.id, "name", &e.name);
    }
    for e in &c4.elements {
        match (&e.parent, e.level.parent_level()) {
            (None, _) => {}
            (Some(p), expected) => match levels.get(p.as_str()) {
                None => v.push(&e.id, Rule::DanglingReference, format!("{} → {p}", e.id)),
                Some(actual) if Some(*actual) != expected => v.push(
                    &e.id,
                    Rule::C4LevelOrder,
                    format!("{} {} has {} parent {p}", e.level.as_str(), e.id, actual.as_str()),
                ),
                Some(_) => {}
            },
        }
    }
    for r in &c4.relations {
        let name = format!("{}->{}", r.from, r.to);
        for end in [&r.from, &r.to] {
            if !levels.contains_key(end.as_str()) {
                v.push(&name, Rule::DanglingReference, format!("{name} → {end}"));
            }
        }
    }
    let mut prefixes = BTreeSet::new();
    for m in &c4.path_mappings {
        if !prefixes.insert(m.path_prefix.as_str()) {
            v.push(&m.path_prefix, Rule::C4DuplicatePathPrefix, "path prefix mapped twice");
        }
        if !levels.contains_key(m.element_id.as_str()) {
            v.push(
                &m.path_prefix,
                Rule::DanglingReference,
                format!("{} → {}", m.path_prefix, m.element_id),
            );
        }
    }
}

fn check_adrs(v: &mut Checker, bundle: &ArtifactBundle, adr_ids: &BTreeSet<&str>) {
    let superseded_by: BTreeSet<&str> = bundle
        .adrs
        .iter()
        .filter_map(|a| a.supersedes.as_deref().filter(|s| *s != a.id))
        .collect();
    for a in &bundle.adrs {
        if v.non_empty(&a.id, "title", &a.title) {
            v.single_line(&a.id, "title", &a.title);
        }
        for (field, text) in [
            ("context", &a.context),
            ("decision", &a.decision),
            ("consequences", &a.consequences),
        ] {
            if v.non_empty(&a.id, field, text) && text.trim() != text.as_str() {
                v.push(&a.id, Rule::FieldFormat, format!("{field} has surrounding whitespace"));
            }
        }
        if let Some(s) = &a.supersedes {
            if s == &a.id {
                v.push(&a.id, Rule::AdrSupersedesSelf, "record supersedes itself");
            } else {
                v.reference(&a.id, s, adr_ids);
            }
        }
        if a.status == AdrStatus::Superseded && !superseded_by.contains(a.id.as_str()) {
            v.push(
                &a.id,
                Rule::AdrSupersededWithoutSuccessor,
                "status is superseded but no record supersedes it",
            );
        }
    }
}

#[derive(Default)]
struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, artifact: &str, rule: Rule, detail: impl Into<String>) {
        self.out.push(Violation::new(artifact, rule, detail));
    }

    /// Checks id patterns and uniqueness; returns the id set.
    fn ids<'a>(&mut self, kind: IdKind, ids: impl Iterator<Item = &'a str>) -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::new();
        for id in ids {
            if !kind.matches(id) {
                self.push(id, Rule::IdFormat, format!("`{id}` is not a valid {kind} id"));
            }
            if !seen.insert(id) {
                self.push(id, Rule::DuplicateId, format!("{kind} id declared more than once"));
            }
        }
        seen
    }

    fn non_empty(&mut self, artifact: &str, field: &str, value: &str) -> bool {
        if value.trim().is_empty() {
            self.push(artifact, Rule::EmptyField, format!("{field} is empty"));
            false
        } else {
            true
        }
    }

    fn single_line(&mut self, artifact: &str, field: &str, value: &str) {
        if value.contains(['\n', '\r']) || value.trim() != value {
            self.push(
                artifact,
                Rule::FieldFormat,
                format!("{field} must be a single trimmed line"),
            );
        }
    }

    fn reference(&mut self, from: &str, to: &str, known: &BTreeSet<&str>) -> bool {
        if known.contains(to) {
            true
        } else {
            self.push(from, Rule::DanglingReference, format!("{from} → {to}"));
            false
        }
    }
}
