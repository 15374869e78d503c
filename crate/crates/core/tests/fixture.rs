use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use shiftup_core::artifact::validate;
use shiftup_core::gwt::{lint_tests, LintRule};
use shiftup_core::metrics::{categorize, read_prompt_log, Categorized, RuleTable};
use shiftup_core::{load_bundle, save_bundle};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/snackbar")
}

/// Relative path → bytes for every file under `root`, skipping logs.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            if rel.starts_with("logs") || rel.starts_with("plans") {
                continue;
            }
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn loads_with_expected_counts() {
    let start = Instant::now();
    let b = load_bundle(fixture()).expect("fixture is valid");
    let elapsed = start.elapsed();
    assert!(validate(&b).is_empty());
    assert_eq!(b.stories.len(), 68);
    assert_eq!(b.tests.len(), 175);
    assert_eq!(b.phases.len(), 10);
    assert_eq!(b.issues.len(), 25);
    assert_eq!(b.requirements.len(), 26);
    assert_eq!(b.adrs.len(), 6);
    assert!(elapsed.as_secs_f64() < 1.0, "load took {elapsed:?}");
}

#[test]
fn save_is_byte_identical() {
    let b = load_bundle(fixture()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&b, dir.path()).unwrap();
    let (want, got) = (snapshot(&fixture()), snapshot(dir.path()));
    assert_eq!(want.keys().collect::<Vec<_>>(), got.keys().collect::<Vec<_>>());
    for (k, v) in &want {
        assert!(got[k] == *v, "{k} differs after save");
    }
    assert_eq!(load_bundle(dir.path()).unwrap(), b);
}

#[test]
fn lint_findings_are_pinned() {
    let b = load_bundle(fixture()).unwrap();
    let warnings = lint_tests(&b.tests);
    let count = |rule| warnings.iter().filter(|w| w.rule == rule).count();
    assert_eq!(count(LintRule::MultipleWhen), 5);
    assert_eq!(count(LintRule::DuplicateClause), 2);
    assert_eq!(count(LintRule::LongName), 0);
    // Counted independently with a line scanner over the .gwt files.
    assert_eq!(count(LintRule::ThenConjunction), 32);
    let mut ids: Vec<&str> = warnings
        .iter()
        .filter(|w| w.rule == LintRule::MultipleWhen)
        .map(|w| w.test_id.as_str())
        .collect();
    ids.dedup();
    assert_eq!(ids, ["TC-5", "TC-23", "TC-41", "TC-77", "TC-120"]);
}

#[test]
fn default_rules_agree_with_labels() {
    let records = read_prompt_log(&fixture().join("logs/prompts.jsonl")).unwrap();
    assert_eq!(records.len(), 352);
    let rules = RuleTable::default();
    for r in &records {
        let label = r.label.expect("fixture records are labeled");
        let unlabeled = shiftup_core::metrics::PromptRecord {
            label: None,
            ..r.clone()
        };
        assert_eq!(categorize(&unlabeled, &rules), Categorized::Category(label), "{}", r.text);
    }
}
