use std::fs;
use std::path::Path;

use proptest::prelude::*;
use shiftup_core::metrics::{
    distribution_report, read_prompt_log, record_prompt, rounded_percent, Paradigm, PromptCategory, PromptError,
    PromptRecord, RuleTable,
};

const SHIFT_UP: [u64; 5] = [62, 16, 9, 7, 5];
const STRUCTURED: [u64; 5] = [52, 27, 5, 5, 11];
const PER_PARADIGM: u64 = 176;

fn fixture_log() -> Vec<PromptRecord> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/snackbar/logs/prompts.jsonl");
    read_prompt_log(&path).unwrap()
}

/// Integer percent with ties to even, by comparing doubled remainders.
fn half_even(count: u64, total: u64) -> u64 {
    let scaled = 100 * count;
    let (q, r) = (scaled / total, scaled % total);
    if 2 * r > total || (2 * r == total && q % 2 == 1) {
        q + 1
    } else {
        q
    }
}

/// Every count vector over `total` prompts whose rounded shares equal `target`.
fn compositions(target: &[u64], total: u64) -> Vec<Vec<u64>> {
    let candidates: Vec<Vec<u64>> = target
        .iter()
        .map(|&p| (0..=total).filter(|&c| half_even(c, total) == p).collect())
        .collect();
    let mut out = vec![vec![]];
    for cands in &candidates {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<u64>| {
                cands.iter().map(move |&c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out.retain(|v| v.iter().sum::<u64>() == total);
    out
}

#[test]
fn published_shares_admit_the_fixture_counts() {
    let shift = compositions(&SHIFT_UP, PER_PARADIGM);
    let structured = compositions(&STRUCTURED, PER_PARADIGM);
    assert!(shift.contains(&vec![109, 29, 16, 13, 9]), "{shift:?}");
    assert!(structured.contains(&vec![91, 48, 9, 9, 19]), "{structured:?}");
}

#[test]
fn fixture_reproduces_published_distribution() {
    let log = fixture_log();
    assert_eq!(log.len(), 2 * PER_PARADIGM as usize);
    let rules = RuleTable::default();
    for (paradigm, want, counts) in [
        (Paradigm::ShiftUp, SHIFT_UP, [109, 29, 16, 13, 9]),
        (Paradigm::StructuredVibe, STRUCTURED, [91, 48, 9, 9, 19]),
    ] {
        let r = distribution_report(&log, paradigm, &rules).unwrap();
        assert_eq!(r.total, PER_PARADIGM);
        assert_eq!(r.percents(), want);
        assert_eq!(r.counts(), counts);
        let cats: Vec<_> = r.rows.iter().map(|row| row.category).collect();
        assert_eq!(cats, paradigm.categories());
    }
}

#[test]
fn report_table_layout() {
    let r = distribution_report(&fixture_log(), Paradigm::ShiftUp, &RuleTable::default()).unwrap();
    let table = r.to_table();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "shift_up (176 prompts)");
    assert!(lines[2].starts_with("proceed_next_step"));
    let cols: Vec<&str> = lines[2].split_whitespace().collect();
    assert_eq!(cols, ["proceed_next_step", "109", "62%"]);
    assert_eq!(lines[2].len(), lines[1].len());
    assert_eq!(lines.len(), 7);
}

#[test]
fn uncategorized_prompts_block_the_report() {
    let mut log = fixture_log();
    log.push(PromptRecord {
        ts: "2026-01-01T00:00:00Z".parse().unwrap(),
        paradigm: Paradigm::ShiftUp,
        text: "What is the weather like?".into(),
        issue_ref: None,
        label: None,
    });
    let err = distribution_report(&log, Paradigm::ShiftUp, &RuleTable::default()).unwrap_err();
    assert_eq!(err.texts, [(177, "What is the weather like?".to_owned())]);
    // The other paradigm is unaffected.
    assert!(distribution_report(&log, Paradigm::StructuredVibe, &RuleTable::default()).is_ok());
}

#[test]
fn ties_round_to_even() {
    assert_eq!(rounded_percent(1, 8), 12);
    assert_eq!(rounded_percent(3, 8), 38);
    assert_eq!(rounded_percent(1, 200), 0);
    assert_eq!(rounded_percent(3, 200), 2);
    assert_eq!(rounded_percent(7, 7), 100);
}

fn record(text: &str, label: Option<PromptCategory>) -> PromptRecord {
    PromptRecord {
        ts: "2026-03-01T12:00:00Z".parse().unwrap(),
        paradigm: Paradigm::ShiftUp,
        text: text.into(),
        issue_ref: Some("ISS-4".into()),
        label,
    }
}

#[test]
fn recording_appends_and_rejects_bad_records() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("logs/prompts.jsonl");
    let first = record("Proceed.", Some(PromptCategory::ProceedNextStep));
    record_prompt(&log, &first).unwrap();
    let before = fs::read(&log).unwrap();
    let second = record("Run the acceptance tests.", None);
    record_prompt(&log, &second).unwrap();
    let after = fs::read(&log).unwrap();
    assert!(after.starts_with(&before));
    assert_eq!(read_prompt_log(&log).unwrap(), [first, second]);

    assert!(matches!(record_prompt(&log, &record("  ", None)), Err(PromptError::EmptyText)));
    let foreign = record("Fix it", Some(PromptCategory::ManualIssueFix));
    assert!(matches!(record_prompt(&log, &foreign), Err(PromptError::ForeignLabel { .. })));
    assert_eq!(fs::read(&log).unwrap(), after);
}

#[test]
fn malformed_line_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("p.jsonl");
    let good = serde_json::to_string(&record("Proceed.", None)).unwrap();
    fs::write(&log, format!("{good}\n\n{{not json\n")).unwrap();
    match read_prompt_log(&log).unwrap_err() {
        PromptError::Malformed { line, .. } => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(read_prompt_log(&dir.path().join("absent.jsonl")).unwrap().is_empty());
}

proptest! {
    #[test]
    fn rounding_is_nearest(count in 0u64..10_000, extra in 0u64..10_000) {
        let total = count + extra + 1;
        let p = rounded_percent(count, total);
        let exact = 100.0 * count as f64 / total as f64;
        prop_assert!((p as f64 - exact).abs() <= 0.5 + 1e-9);
        prop_assert_eq!(p, half_even(count, total));
    }

    #[test]
    fn report_counts_partition_the_paradigm(picks in prop::collection::vec(0usize..352, 1..200)) {
        let log = fixture_log();
        let sample: Vec<PromptRecord> = picks.iter().map(|&i| log[i].clone()).collect();
        for paradigm in Paradigm::ALL {
            let r = distribution_report(&sample, paradigm, &RuleTable::default()).unwrap();
            let n = sample.iter().filter(|s| s.paradigm == paradigm).count() as u64;
            prop_assert_eq!(r.total, n);
            prop_assert_eq!(r.counts().iter().sum::<u64>(), n);
            for row in &r.rows {
                prop_assert_eq!(row.percent, half_even(row.count, n));
            }
        }
    }
}
