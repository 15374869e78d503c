use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use proptest::prelude::*;
use shiftup_core::artifact::{
    validate, AcceptanceTest, AdRecord, AdrStatus, C4Element, C4Level, C4Model, Clause, ClauseKind, IssueStatus,
    LoadError, PathMapping, Requirement, RequirementKind, RoadmapPhase, Rule, SaveError, UserStory, WorkIssue,
};
use shiftup_core::{load_bundle, save_bundle, ArtifactBundle, ProjectConfig};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/snackbar")
}

fn line() -> impl Strategy<Value = String> {
    "[\\p{L}\\p{N}]([\\p{L}\\p{N} ,.()'-]{0,30}[\\p{L}\\p{N}.])?"
}

fn paragraph() -> impl Strategy<Value = String> {
    prop::collection::vec(line(), 1..4).prop_map(|ls| ls.join("\n"))
}

#[derive(Debug, Clone)]
struct Shape {
    reqs: usize,
    stories: Vec<Vec<usize>>,
    tests: Vec<(usize, String, Vec<Clause>)>,
    phases: usize,
    deps: Vec<Vec<usize>>,
    issues: Vec<(usize, Vec<prop::sample::Index>, u8)>,
    adrs: Vec<(String, String, bool)>,
}

fn clauses() -> impl Strategy<Value = Vec<Clause>> {
    (1usize..3, 1usize..3, 1usize..3, prop::collection::vec(line(), 6)).prop_map(|(g, w, t, texts)| {
        let mut texts = texts.into_iter().cycle();
        let mut out = Vec::new();
        for (k, n) in [(ClauseKind::Given, g), (ClauseKind::When, w), (ClauseKind::Then, t)] {
            for _ in 0..n {
                out.push(Clause::new(k, texts.next().unwrap()));
            }
        }
        out
    })
}

fn shape() -> impl Strategy<Value = Shape> {
    (1usize..5, 1usize..6, 1usize..4).prop_flat_map(|(reqs, stories, phases)| {
        (
            prop::collection::vec(prop::collection::vec(0..reqs, 0..3), stories),
            prop::collection::vec((0..stories, line(), clauses()), phases..phases + 8),
            prop::collection::vec(prop::collection::vec(0usize..8, 0..3), phases),
            prop::collection::vec((0..phases, prop::collection::vec(any::<prop::sample::Index>(), 1..4), 0u8..3), 0..5),
            prop::collection::vec((line(), paragraph(), any::<bool>()), 0..4),
        )
            .prop_map(move |(stories, tests, deps, issues, adrs)| Shape {
                reqs,
                stories,
                tests,
                phases,
                deps,
                issues,
                adrs,
            })
    })
}

fn build(shape: Shape) -> ArtifactBundle {
    let mut b = ArtifactBundle::empty("", ProjectConfig::named("generated"));
    for i in 1..=shape.reqs {
        b.requirements.push(Requirement {
            id: format!("REQ-{i}"),
            kind: if i % 2 == 0 {
                RequirementKind::NonFunctional
            } else {
                RequirementKind::Functional
            },
            text: format!("requirement {i}"),
        });
    }
    for (i, refs) in shape.stories.iter().enumerate() {
        let mut refs: Vec<String> = refs.iter().map(|r| format!("REQ-{}", r + 1)).collect();
        refs.sort();
        refs.dedup();
        b.stories.push(UserStory {
            id: format!("US-{}", i + 1),
            as_a: "customer".into(),
            i_want: format!("feature {i}"),
            so_that: "it helps".into(),
            requirement_refs: refs,
        });
    }
    for (i, (story, name, clauses)) in shape.tests.into_iter().enumerate() {
        b.tests.push(AcceptanceTest {
            id: format!("TC-{}", i + 1),
            story_ref: format!("US-{}", story + 1),
            name,
            clauses,
        });
    }
    let tests_of = |p: usize| -> Vec<String> {
        (0..b.tests.len())
            .filter(|t| t % shape.phases == p)
            .map(|t| format!("TC-{}", t + 1))
            .collect()
    };
    for p in 0..shape.phases {
        let mut deps: Vec<String> = shape.deps[p]
            .iter()
            .filter(|_| p > 0)
            .map(|d| format!("PH-{}", d % p + 1))
            .collect();
        deps.sort();
        deps.dedup();
        b.phases.push(RoadmapPhase {
            id: format!("PH-{}", p + 1),
            name: format!("phase {}", p + 1),
            goal: "ship it".into(),
            architecture_tasks: vec![],
            test_ids: tests_of(p),
            depends_on: deps,
        });
    }
    for (i, (phase, picks, status)) in shape.issues.into_iter().enumerate() {
        let pool = tests_of(phase);
        let mut constraints: Vec<String> = picks.iter().map(|ix| pool[ix.index(pool.len())].clone()).collect();
        constraints.sort();
        constraints.dedup();
        b.issues.push(WorkIssue {
            id: format!("ISS-{}", i + 1),
            phase_ref: format!("PH-{}", phase + 1),
            title: format!("issue {}", i + 1),
            description: "do the work".into(),
            constraint_test_ids: constraints,
            context_links: vec![],
            status: [IssueStatus::Open, IssueStatus::InProgress, IssueStatus::Closed][status as usize],
        });
    }
    b.c4 = C4Model {
        elements: vec![
            C4Element {
                id: "sys".into(),
                name: "System".into(),
                level: C4Level::Context,
                parent: None,
                description: String::new(),
            },
            C4Element {
                id: "app".into(),
                name: "App".into(),
                level: C4Level::Container,
                parent: Some("sys".into()),
                description: "the app".into(),
            },
        ],
        relations: vec![],
        path_mappings: vec![PathMapping {
            path_prefix: "src/".into(),
            element_id: "app".into(),
        }],
    };
    let n = shape.adrs.len();
    for (i, (title, body, supersede)) in shape.adrs.into_iter().enumerate() {
        let successor = i + 1 < n && supersede;
        b.adrs.push(AdRecord {
            id: format!("ADR-{:04}", i + 1),
            title,
            status: if successor {
                AdrStatus::Superseded
            } else {
                AdrStatus::Accepted
            },
            date: NaiveDate::from_ymd_opt(2025, 1, 1 + i as u32).unwrap(),
            context: body.clone(),
            decision: body,
            consequences: "fine".into(),
            supersedes: None,
        });
    }
    for i in 1..n {
        if b.adrs[i - 1].status == AdrStatus::Superseded {
            b.adrs[i].supersedes = Some(b.adrs[i - 1].id.clone());
        }
    }
    b.normalize();
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_round_trip(shape in shape()) {
        let bundle = build(shape);
        prop_assert_eq!(validate(&bundle), vec![]);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).map_err(|e| TestCaseError::fail(format!("{e:?}")))?;
        prop_assert_eq!(&loaded, &bundle);
        // Saving what was loaded changes no byte.
        let again = tempfile::tempdir().unwrap();
        save_bundle(&loaded, again.path()).unwrap();
        for sub in ["shiftup.json", "roadmap/phases.json", "stories/stories.json"] {
            prop_assert_eq!(fs::read(dir.path().join(sub)).unwrap(), fs::read(again.path().join(sub)).unwrap());
        }
    }
}

type Defect = (Rule, fn(&mut ArtifactBundle));

/// Independent defects, each breaking exactly one invariant of the fixture.
fn catalog() -> Vec<Defect> {
    vec![
        (Rule::DanglingReference, |b| b.tests[10].story_ref = "US-999".into()),
        (Rule::EmptyField, |b| b.stories[3].as_a = "  ".into()),
        (Rule::IdFormat, |b| {
            b.requirements.push(Requirement {
                id: "REQ-07".into(),
                kind: RequirementKind::Functional,
                text: "leading zero".into(),
            })
        }),
        (Rule::PhaseSelfDependency, |b| b.phases[0].depends_on.push("PH-1".into())),
        (Rule::GwtClauseOrder, |b| {
            let n = b.tests[20].clauses.len();
            b.tests[20].clauses.swap(0, n - 1)
        }),
        (Rule::IssueConstraintOutsidePhase, |b| {
            b.issues[0].constraint_test_ids.push("TC-175".into())
        }),
        (Rule::AdrSupersedesSelf, |b| b.adrs[0].supersedes = Some("ADR-0001".into())),
        (Rule::C4DuplicatePathPrefix, |b| {
            let m = b.c4.path_mappings[0].clone();
            b.c4.path_mappings.push(m)
        }),
        (Rule::FieldFormat, |b| b.tests[30].name.push_str("\nsecond line")),
        (Rule::PhaseDependencyCycle, |b| {
            let p = b.phases.iter_mut().find(|p| p.id == "PH-2").unwrap();
            p.depends_on.push("PH-4".into())
        }),
        (Rule::IssueEmptyConstraints, |b| b.issues[1].constraint_test_ids.clear()),
        (Rule::AdrSupersededWithoutSuccessor, |b| {
            b.adrs.iter_mut().find(|a| a.id == "ADR-0006").unwrap().status = AdrStatus::Superseded
        }),
        (Rule::C4LevelOrder, |b| {
            b.c4.elements.push(C4Element {
                id: "stray".into(),
                name: "Stray".into(),
                level: C4Level::Component,
                parent: Some("snackbar".into()),
                description: String::new(),
            })
        }),
        (Rule::GwtMissingClauseKind, |b| {
            b.tests[40].clauses.retain(|c| c.kind != ClauseKind::When)
        }),
        (Rule::DuplicateId, |b| {
            let s = b.stories[0].clone();
            b.stories.push(s)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Every injected defect is reported, and nothing else.
    #[test]
    fn violations_are_complete(mask in prop::collection::vec(any::<bool>(), catalog().len())) {
        let base = load_bundle(fixture()).unwrap();
        let mut b = base.clone();
        let mut expected = Vec::new();
        for ((rule, apply), on) in catalog().into_iter().zip(mask) {
            if on {
                apply(&mut b);
                expected.push(rule);
            }
        }
        let mut got: Vec<Rule> = validate(&b).into_iter().map(|v| v.rule).collect();
        got.sort_by_key(|r| r.name());
        expected.sort_by_key(|r| r.name());
        prop_assert_eq!(got, expected);
    }
}

#[test]
fn each_defect_alone_is_one_violation() {
    let base = load_bundle(fixture()).unwrap();
    for (rule, apply) in catalog() {
        let mut b = base.clone();
        apply(&mut b);
        let v = validate(&b);
        assert_eq!(v.len(), 1, "{rule}: {v:?}");
        assert_eq!(v[0].rule, rule);
    }
}

fn copy_tree(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let path = entry.unwrap().path();
        let to = dst.join(path.file_name().unwrap());
        if path.is_dir() {
            copy_tree(&path, &to);
        } else {
            fs::copy(&path, &to).unwrap();
        }
    }
}

#[test]
fn load_reports_every_broken_file() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixture(), dir.path());
    fs::write(dir.path().join("issues/ISS-3.json"), "{\"id\": \"ISS-3\",\n  oops}").unwrap();
    let gwt = dir.path().join("tests/US-2.gwt");
    let text = fs::read_to_string(&gwt).unwrap().replacen("When ", "Whenever ", 1);
    fs::write(&gwt, text).unwrap();
    let errors = load_bundle(dir.path()).unwrap_err();
    assert!(errors.len() >= 2, "{errors:?}");
    let files: Vec<String> = errors
        .iter()
        .filter_map(|e| match e {
            LoadError::Malformed { path, line, .. } => {
                assert!(*line >= 1);
                Some(path.file_name().unwrap().to_string_lossy().into_owned())
            }
            _ => None,
        })
        .collect();
    assert!(files.contains(&"ISS-3.json".to_owned()), "{files:?}");
    assert!(files.contains(&"US-2.gwt".to_owned()), "{files:?}");
}

#[test]
fn missing_manifest_is_an_environment_error() {
    let dir = tempfile::tempdir().unwrap();
    let errors = load_bundle(dir.path()).unwrap_err();
    assert!(matches!(errors.as_slice(), [LoadError::MissingManifest(_)]));
    assert!(errors[0].is_environment());
}

#[test]
fn save_refuses_invalid_and_reports_write_failures() {
    let mut b = load_bundle(fixture()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    // A regular file where a directory must go.
    let blocker = dir.path().join("blocked");
    fs::write(&blocker, "").unwrap();
    assert!(matches!(save_bundle(&b, blocker.join("root")), Err(SaveError::Write { .. })));
    b.tests[0].story_ref = "US-999".into();
    assert!(matches!(save_bundle(&b, dir.path()), Err(SaveError::Invalid(v)) if v.len() == 1));
}
