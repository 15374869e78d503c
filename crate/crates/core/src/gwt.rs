//! The given-when-then acceptance-test format (`.gwt`).
//!
//! A file holds one or more test blocks separated by blank lines:
//!
//! ```text
//! # comment
//! test: TC-1
//! story: US-1
//! name: Customer signs in
//! Given a registered account
//! When I sign in with correct credentials
//! Then I am taken to the menu page
//! And my name is shown
//! ```
//!
//! `And` continues the kind of the nearest preceding `Given`/`When`/`Then`.
//! Clause kinds must appear in given, when, then order; an out-of-order
//! clause is a parse error, not a lint.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use regex::Regex;
use serde::Serialize;

use crate::artifact::{AcceptanceTest, Clause, ClauseKind};

/// Names longer than this draw a `long-name` warning.
pub const MAX_NAME_LEN: usize = 120;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GwtFile {
    pub path: PathBuf,
    pub tests: Vec<AcceptanceTest>,
}

/// A parse diagnostic at a 1-based line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GwtError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for GwtError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for GwtError {}

const HEADERS: [&str; 3] = ["test", "story", "name"];

pub fn parse_gwt(text: &str) -> Result<GwtFile, Vec<GwtError>> {
    let mut errors = Vec::new();
    let mut tests = Vec::new();
    let mut seen = HashSet::new();

    let mut block: Vec<(usize, &str)> = Vec::new();
    let lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    for (idx, raw) in lines.enumerate() {
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            flush(&mut block, &mut tests, &mut errors, &mut seen);
        } else {
            block.push((idx + 1, line));
        }
    }
    flush(&mut block, &mut tests, &mut errors, &mut seen);

    if errors.is_empty() {
        Ok(GwtFile {
            path: PathBuf::new(),
            tests,
        })
    } else {
        Err(errors)
    }
}

fn flush(
    block: &mut Vec<(usize, &str)>,
    tests: &mut Vec<AcceptanceTest>,
    errors: &mut Vec<GwtError>,
    seen: &mut HashSet<String>,
) {
    if block.is_empty() {
        return;
    }
    match parse_block(block) {
        Ok(test) => {
            if seen.insert(test.id.clone()) {
                tests.push(test);
            } else {
                errors.push(GwtError {
                    line: block[0].0,
                    message: format!("duplicate test id `{}`", test.id),
                });
            }
        }
        Err(mut e) => errors.append(&mut e),
    }
    block.clear();
}

fn err(line: usize, message: impl Into<String>) -> GwtError {
    GwtError {
        line,
        message: message.into(),
    }
}

fn parse_block(block: &[(usize, &str)]) -> Result<AcceptanceTest, Vec<GwtError>> {
    let mut header = [""; 3];
    for (i, key) in HEADERS.iter().enumerate() {
        let Some(&(lineno, line)) = block.get(i) else {
            let last = block.last().map_or(1, |l| l.0);
            return Err(vec![err(last, format!("missing header `{key}: <value>`"))]);
        };
        if line == "And" || line.starts_with("And ") {
            return Err(vec![err(lineno, "And without preceding clause")]);
        }
        let value = line
            .split_once(':')
            .filter(|(k, _)| k.trim() == *key)
            .map(|(_, v)| v.trim());
        match value {
            Some(v) if !v.is_empty() && (i == 2 || !v.contains(char::is_whitespace)) => header[i] = v,
            Some(_) => return Err(vec![err(lineno, format!("expected a value after `{key}:`"))]),
            None => return Err(vec![err(lineno, format!("missing header: expected `{key}: <value>`"))]),
        }
    }

    let mut errors = Vec::new();
    let mut clauses: Vec<Clause> = Vec::new();
    let mut current: Option<ClauseKind> = None;
    for &(lineno, line) in &block[3..] {
        let (keyword, rest) = line.split_once(' ').unwrap_or((line, ""));
        let kind = match keyword {
            "Given" => Some(ClauseKind::Given),
            "When" => Some(ClauseKind::When),
            "Then" => Some(ClauseKind::Then),
            "And" => None,
            _ => {
                errors.push(err(
                    lineno,
                    format!("expected `Given`, `When`, `Then` or `And`, found `{keyword}`"),
                ));
                continue;
            }
        };
        let text = rest.trim();
        if text.is_empty() {
            errors.push(err(lineno, format!("expected clause text after `{keyword}`")));
            continue;
        }
        let kind = match (kind, current) {
            (None, None) => {
                errors.push(err(lineno, "And without preceding clause"));
                continue;
            }
            (None, Some(k)) => k,
            (Some(k), Some(prev)) if k < prev => {
                errors.push(err(
                    lineno,
                    format!(
                        "clause order: `{}` after `{}` (expected given, when, then)",
                        k.keyword(),
                        prev.keyword()
                    ),
                ));
                continue;
            }
            (Some(k), _) => k,
        };
        current = Some(kind);
        clauses.push(Clause::new(kind, text));
    }

    let last = block.last().map_or(1, |l| l.0);
    for kind in [ClauseKind::Given, ClauseKind::When, ClauseKind::Then] {
        if errors.is_empty() && !clauses.iter().any(|c| c.kind == kind) {
            errors.push(err(last, format!("test has no `{}` clause", kind.keyword())));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(AcceptanceTest {
        id: header[0].to_owned(),
        story_ref: header[1].to_owned(),
        name: header[2].to_owned(),
        clauses,
    })
}

/// Canonical text: fixed header order, one clause per line, repeated kinds
/// written as `And`, one blank line between tests, trailing newline.
pub fn render_gwt(file: &GwtFile) -> String {
    render_tests(&file.tests)
}

pub fn render_tests<'a>(tests: impl IntoIterator<Item = &'a AcceptanceTest>) -> String {
    let mut out = String::new();
    for (i, t) in tests.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("test: {}\nstory: {}\nname: {}\n", t.id, t.story_ref, t.name));
        let mut prev = None;
        for c in &t.clauses {
            let keyword = if prev == Some(c.kind) { "And" } else { c.kind.keyword() };
            out.push_str(keyword);
            out.push(' ');
            out.push_str(&c.text);
            out.push('\n');
            prev = Some(c.kind);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LintRule {
    MultipleWhen,
    ThenConjunction,
    LongName,
    DuplicateClause,
}

impl LintRule {
    pub fn name(self) -> &'static str {
        match self {
            LintRule::MultipleWhen => "multiple-when",
            LintRule::ThenConjunction => "then-conjunction",
            LintRule::LongName => "long-name",
            LintRule::DuplicateClause => "duplicate-clause",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintWarning {
    pub test_id: String,
    pub rule: LintRule,
    pub message: String,
}

impl fmt::Display for LintWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.test_id, self.rule.name(), self.message)
    }
}

pub fn lint_gwt(file: &GwtFile) -> Vec<LintWarning> {
    lint_tests(&file.tests)
}

pub fn lint_tests<'a>(tests: impl IntoIterator<Item = &'a AcceptanceTest>) -> Vec<LintWarning> {
    let conjunction = Regex::new(r"(?i)\band\b").expect("static regex");
    let mut out = Vec::new();
    for t in tests {
        let mut warn = |rule: LintRule, message: String| {
            out.push(LintWarning {
                test_id: t.id.clone(),
                rule,
                message,
            })
        };
        let whens = t.clauses_of(ClauseKind::When).count();
        if whens > 1 {
            warn(LintRule::MultipleWhen, format!("{whens} `When` clauses; test one action"));
        }
        for c in t.clauses_of(ClauseKind::Then) {
            if conjunction.is_match(&c.text) {
                warn(
                    LintRule::ThenConjunction,
                    format!("`Then {}` joins outcomes with \"and\"; split with `And`", c.text),
                );
            }
        }
        let len = t.name.chars().count();
        if len > MAX_NAME_LEN {
            warn(LintRule::LongName, format!("name is {len} characters (max {MAX_NAME_LEN})"));
        }
        let mut texts = HashSet::new();
        for c in &t.clauses {
            if !texts.insert(c.text.to_lowercase()) {
                warn(LintRule::DuplicateClause, format!("clause `{}` repeated", c.text));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "test: TC-1\nstory: US-1\nname: n\nGiven a\nWhen b\nThen c";

    #[test]
    fn minimal_block() {
        let f = parse_gwt(MINIMAL).unwrap();
        assert_eq!(f.tests.len(), 1);
        let t = &f.tests[0];
        assert_eq!((t.id.as_str(), t.story_ref.as_str(), t.name.as_str()), ("TC-1", "US-1", "n"));
        assert_eq!(t.clauses.len(), 3);
        assert_eq!(render_gwt(&f), format!("{MINIMAL}\n"));
        assert_eq!(render_gwt(&f).lines().count(), 6);
    }

    #[test]
    fn and_inherits_kind() {
        let f = parse_gwt("test: TC-1\nstory: US-1\nname: n\nGiven a\nAnd a2\nWhen b\nThen c\nAnd d").unwrap();
        let kinds: Vec<_> = f.tests[0].clauses.iter().map(|c| c.kind).collect();
        use ClauseKind::*;
        assert_eq!(kinds, [Given, Given, When, Then, Then]);
    }

    #[test]
    fn leading_and_is_an_error_at_line_one() {
        let errs = parse_gwt("And x").unwrap_err();
        assert_eq!(errs, vec![err(1, "And without preceding clause")]);
        let errs = parse_gwt("test: TC-1\nstory: US-1\nname: n\nAnd x\nGiven a\nWhen b\nThen c").unwrap_err();
        assert_eq!(errs, vec![err(4, "And without preceding clause")]);
    }

    #[test]
    fn clause_order_violation() {
        let errs = parse_gwt("test: TC-1\nstory: US-1\nname: n\nGiven a\nWhen b\nThen c\nGiven d").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 7);
        assert!(errs[0].message.contains("`Given` after `Then`"));
    }

    #[test]
    fn missing_header() {
        let errs = parse_gwt("test: TC-1\nname: n\nGiven a\nWhen b\nThen c").unwrap_err();
        assert_eq!(errs[0].line, 2);
        assert!(errs[0].message.contains("story"));
    }

    #[test]
    fn missing_kind() {
        let errs = parse_gwt("test: TC-1\nstory: US-1\nname: n\nGiven a\nThen c").unwrap_err();
        assert!(errs[0].message.contains("`When`"));
    }

    #[test]
    fn two_tests_one_separator_and_comments_and_crlf() {
        let text = "# header comment\r\ntest: TC-1\r\nstory: US-1\r\nname: a\r\nGiven a\r\nWhen b\r\nThen c\r\n\r\n\r\n# between\r\ntest: TC-2\r\nstory: US-1\r\nname: b\r\nGiven a\r\nWhen b\r\nThen c\r\n";
        let f = parse_gwt(text).unwrap();
        assert_eq!(f.tests.len(), 2);
        let out = render_gwt(&f);
        assert!(!out.contains('\r'));
        assert_eq!(out.matches("\n\n").count(), 1);
        assert!(out.ends_with("Then c\n"));
    }

    #[test]
    fn duplicate_id_in_file() {
        let text = format!("{MINIMAL}\n\n{MINIMAL}\n");
        let errs = parse_gwt(&text).unwrap_err();
        assert_eq!(errs[0].line, 8);
    }

    #[test]
    fn errors_from_several_blocks_are_all_reported() {
        let text = "And x\n\ntest: TC-2\nstory: US-1\nname: n\nGiven a\nWhen b\nThen c\nWhen d\n";
        let errs = parse_gwt(text).unwrap_err();
        assert_eq!(errs.iter().map(|e| e.line).collect::<Vec<_>>(), [1, 9]);
    }

    #[test]
    fn lint_rules() {
        let clean = parse_gwt(MINIMAL).unwrap();
        assert_eq!(lint_gwt(&clean), vec![]);

        let f = parse_gwt("test: TC-1\nstory: US-1\nname: n\nGiven a\nWhen b\nAnd b2\nThen c").unwrap();
        let w = lint_gwt(&f);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].rule, LintRule::MultipleWhen);

        let f = parse_gwt("test: TC-1\nstory: US-1\nname: n\nGiven a\nWhen b\nThen c and d\nAnd Android works").unwrap();
        let w: Vec<_> = lint_gwt(&f).into_iter().map(|w| w.rule).collect();
        assert_eq!(w, [LintRule::ThenConjunction]);

        let long = "x".repeat(121);
        let f = parse_gwt(&format!("test: TC-1\nstory: US-1\nname: {long}\nGiven a\nWhen b\nThen a")).unwrap();
        let w: Vec<_> = lint_gwt(&f).into_iter().map(|w| w.rule).collect();
        assert_eq!(w, [LintRule::LongName, LintRule::DuplicateClause]);
    }
}
