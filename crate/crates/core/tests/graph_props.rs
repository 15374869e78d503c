use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use shiftup_core::artifact::{AcceptanceTest, Clause, ClauseKind, Requirement, RequirementKind, RoadmapPhase, UserStory, WorkIssue};
use shiftup_core::graph::{build_graph, coverage_report, impact_of, phase_order, EdgeKind, GraphError, TraceGraph};
use shiftup_core::ids::numeric_suffix;
use shiftup_core::{ArtifactBundle, ProjectConfig};

#[derive(Debug, Clone)]
struct Spec {
    /// Phase numbers in topological position order (a random permutation).
    labels: Vec<u32>,
    /// For position j, dependencies on earlier positions.
    deps: Vec<Vec<prop::sample::Index>>,
    stories: Vec<Vec<u8>>,
    tests: Vec<(u8, Option<u8>)>,
    issues: Vec<(u8, Vec<u8>)>,
    reqs: u8,
}

fn spec() -> impl Strategy<Value = Spec> {
    (1usize..=50).prop_flat_map(|n| {
        (
            Just((1..=n as u32).collect::<Vec<_>>()).prop_shuffle(),
            prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 0..4), n),
            prop::collection::vec(prop::collection::vec(any::<u8>(), 0..3), 0..15),
            prop::collection::vec((any::<u8>(), prop::option::of(any::<u8>())), 0..40),
            prop::collection::vec((any::<u8>(), prop::collection::vec(any::<u8>(), 0..4)), 0..10),
            0u8..10,
        )
            .prop_map(|(labels, deps, stories, tests, issues, reqs)| Spec {
                labels,
                deps,
                stories,
                tests,
                issues,
                reqs,
            })
    })
}

fn bundle(s: &Spec) -> ArtifactBundle {
    let mut b = ArtifactBundle::empty("", ProjectConfig::named("random"));
    let n = s.labels.len();
    let ph = |pos: usize| format!("PH-{}", s.labels[pos]);
    for r in 1..=s.reqs {
        b.requirements.push(Requirement {
            id: format!("REQ-{r}"),
            kind: RequirementKind::Functional,
            text: "r".into(),
        });
    }
    for (i, refs) in s.stories.iter().enumerate() {
        b.stories.push(UserStory {
            id: format!("US-{}", i + 1),
            as_a: "a".into(),
            i_want: "b".into(),
            so_that: "c".into(),
            // Some references point past the requirement list on purpose.
            requirement_refs: refs.iter().map(|r| format!("REQ-{}", r % (s.reqs + 2) + 1)).collect(),
        });
    }
    let mut phase_tests: Vec<Vec<String>> = vec![Vec::new(); n];
    for (i, (story, phase)) in s.tests.iter().enumerate() {
        let id = format!("TC-{}", i + 1);
        b.tests.push(AcceptanceTest {
            id: id.clone(),
            story_ref: format!("US-{}", *story as usize % (s.stories.len() + 1) + 1),
            name: "t".into(),
            clauses: vec![
                Clause::new(ClauseKind::Given, "g"),
                Clause::new(ClauseKind::When, "w"),
                Clause::new(ClauseKind::Then, "t"),
            ],
        });
        if let Some(p) = phase {
            phase_tests[*p as usize % n].push(id);
        }
    }
    for (pos, tests) in phase_tests.iter().enumerate() {
        let mut depends_on: Vec<String> = if pos == 0 {
            vec![]
        } else {
            s.deps[pos].iter().map(|ix| ph(ix.index(pos))).collect()
        };
        depends_on.sort();
        depends_on.dedup();
        b.phases.push(RoadmapPhase {
            id: ph(pos),
            name: "p".into(),
            goal: "g".into(),
            architecture_tasks: vec![],
            test_ids: tests.clone(),
            depends_on,
        });
    }
    for (i, (phase, tests)) in s.issues.iter().enumerate() {
        b.issues.push(WorkIssue {
            id: format!("ISS-{}", i + 1),
            phase_ref: ph(*phase as usize % n),
            title: "i".into(),
            description: String::new(),
            constraint_test_ids: tests
                .iter()
                .map(|t| format!("TC-{}", *t as usize % (s.tests.len() + 1) + 1))
                .collect(),
            context_links: vec![],
            status: Default::default(),
        });
    }
    b
}

/// Reflexive-free transitive closure over all edges, by repeated relaxation.
fn closure(g: &TraceGraph) -> BTreeMap<String, BTreeSet<String>> {
    let mut reach: BTreeMap<String, BTreeSet<String>> = g.nodes().map(|(id, _)| (id.to_owned(), BTreeSet::new())).collect();
    for e in g.edges() {
        reach.get_mut(&e.from.0).unwrap().insert(e.to.0.clone());
    }
    loop {
        let mut changed = false;
        let snapshot = reach.clone();
        for out in reach.values_mut() {
            let extra: BTreeSet<String> = out.iter().flat_map(|m| snapshot[m].iter().cloned()).collect();
            for x in extra {
                changed |= out.insert(x);
            }
        }
        if !changed {
            return reach;
        }
    }
}

/// Ready-set order recomputed by scanning: repeatedly take the lowest
/// numbered phase whose dependencies are all placed.
fn greedy_order(b: &ArtifactBundle) -> Vec<String> {
    let mut left: Vec<&RoadmapPhase> = b.phases.iter().collect();
    let mut done: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    while !left.is_empty() {
        let (i, p) = left
            .iter()
            .enumerate()
            .filter(|(_, p)| p.depends_on.iter().all(|d| done.contains(d)))
            .min_by_key(|(_, p)| numeric_suffix(&p.id))
            .expect("acyclic");
        out.push(p.id.clone());
        done.insert(p.id.clone());
        left.remove(i);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn phase_order_is_a_deterministic_topological_order(s in spec()) {
        let b = bundle(&s);
        let order = phase_order(&build_graph(&b)).unwrap();
        prop_assert_eq!(order.len(), b.phases.len());
        let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        for p in &b.phases {
            for d in &p.depends_on {
                prop_assert!(pos[d.as_str()] < pos[p.id.as_str()], "{} before {}", d, p.id);
            }
        }
        prop_assert_eq!(&order, &greedy_order(&b));
        let mut reversed = b.clone();
        reversed.phases.reverse();
        prop_assert_eq!(&order, &phase_order(&build_graph(&reversed)).unwrap());
    }

    #[test]
    fn coverage_never_rises_when_edges_go(s in spec(), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..6)) {
        let mut g = build_graph(&bundle(&s));
        let mut before = coverage_report(&g);
        for pick in picks {
            let edges: Vec<_> = g.edges().cloned().collect();
            if edges.is_empty() {
                break;
            }
            let e = &edges[pick.index(edges.len())];
            prop_assert!(g.remove_edge(&e.from.0, &e.to.0, e.kind));
            let after = coverage_report(&g);
            for (a, b) in after.ratios().iter().zip(before.ratios()) {
                prop_assert!(*a <= b);
            }
            before = after;
        }
    }

    #[test]
    fn impact_matches_reverse_reachability(s in spec()) {
        let g = build_graph(&bundle(&s));
        let reach = closure(&g);
        for (id, _) in g.nodes() {
            let want: Vec<String> = {
                let mut v: Vec<String> = reach
                    .iter()
                    .filter(|(from, to)| from.as_str() != id && to.contains(id))
                    .map(|(from, _)| from.clone())
                    .collect();
                v.sort_by(|a, b| shiftup_core::ids::natural_cmp(a, b));
                v
            };
            prop_assert_eq!(impact_of(&g, id).unwrap(), want, "{}", id);
        }
    }

    #[test]
    fn back_edges_are_reported_as_cycles(s in spec(), a in any::<prop::sample::Index>(), z in any::<prop::sample::Index>()) {
        let b = bundle(&s);
        let mut g = build_graph(&b);
        let n = s.labels.len();
        let (i, j) = (a.index(n), z.index(n));
        // An edge from an earlier position to a later one may close a loop.
        g.add_edge(&format!("PH-{}", s.labels[i.min(j)]), &format!("PH-{}", s.labels[i.max(j)]), EdgeKind::DependsOn);
        let phases: BTreeSet<String> = g.nodes_of(shiftup_core::ids::IdKind::Phase).map(str::to_owned).collect();
        let mut only_deps = TraceGraph::new();
        for p in &phases {
            only_deps.add_node(p);
        }
        for e in g.edges().filter(|e| e.kind == EdgeKind::DependsOn) {
            only_deps.add_edge(&e.from.0, &e.to.0, e.kind);
        }
        let reach = closure(&only_deps);
        let mut cyclic: Vec<String> = phases.iter().filter(|p| reach[*p].contains(*p)).cloned().collect();
        cyclic.sort_by(|a, b| shiftup_core::ids::natural_cmp(a, b));
        match phase_order(&g) {
            Ok(order) => prop_assert!(cyclic.is_empty(), "missed cycle {:?}, order {:?}", cyclic, order),
            Err(GraphError::Cycle { members }) => prop_assert_eq!(members, cyclic),
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }
}

#[test]
fn fixture_graph() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/snackbar");
    let b = shiftup_core::load_bundle(root).unwrap();
    let g = build_graph(&b);
    assert_eq!(
        phase_order(&g).unwrap(),
        ["PH-1", "PH-2", "PH-3", "PH-4", "PH-5", "PH-6", "PH-7", "PH-8", "PH-9", "PH-10"]
    );
    let c = coverage_report(&g);
    assert!(c.is_complete(), "{c:?}");
    assert_eq!(g.node_count(), 26 + 68 + 175 + 25 + 10);
    assert_eq!(g.to_dot(), build_graph(&b).to_dot());
    let impact = impact_of(&g, "TC-1").unwrap();
    assert!(impact.contains(&"ISS-1".to_owned()) && impact.contains(&"PH-1".to_owned()));
}
