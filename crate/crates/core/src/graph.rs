//! Traceability graph over a bundle.
//!
//! Edge directions:
//!
//! | from        | kind         | to          |
//! |-------------|--------------|-------------|
//! | story       | `covers`     | requirement |
//! | test        | `covers`     | story       |
//! | issue       | `constrains` | test        |
//! | phase       | `contains`   | issue, test |
//! | phase       | `depends_on` | phase       |

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::artifact::{ArtifactBundle, RoadmapPhase};
use crate::ids::{natural_cmp, numeric_suffix, IdKind, NaturalKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Covers,
    Constrains,
    Contains,
    DependsOn,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Covers => "covers",
            EdgeKind::Constrains => "constrains",
            EdgeKind::Contains => "contains",
            EdgeKind::DependsOn => "depends_on",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: NaturalKey,
    pub to: NaturalKey,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("dependency cycle among phases: {}", .members.join(", "))]
    Cycle { members: Vec<String> },
    #[error("unknown artifact id `{0}`")]
    UnknownId(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceGraph {
    nodes: BTreeMap<NaturalKey, IdKind>,
    edges: BTreeSet<Edge>,
}

impl TraceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a node typed by its id prefix. Returns false for ids without a
    /// known prefix.
    pub fn add_node(&mut self, id: &str) -> bool {
        match IdKind::of(id) {
            Some(kind) => {
                self.nodes.insert(NaturalKey::from(id), kind);
                true
            }
            None => false,
        }
    }

    /// Insert an edge between existing nodes. Returns false if either end is
    /// missing.
    pub fn add_edge(&mut self, from: &str, to: &str, kind: EdgeKind) -> bool {
        if !self.contains(from) || !self.contains(to) {
            return false;
        }
        self.edges.insert(Edge {
            from: from.into(),
            to: to.into(),
            kind,
        })
    }

    pub fn remove_edge(&mut self, from: &str, to: &str, kind: EdgeKind) -> bool {
        self.edges.remove(&Edge {
            from: from.into(),
            to: to.into(),
            kind,
        })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(&NaturalKey::from(id))
    }

    pub fn node_kind(&self, id: &str) -> Option<IdKind> {
        self.nodes.get(&NaturalKey::from(id)).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, IdKind)> {
        self.nodes.iter().map(|(k, v)| (k.0.as_str(), *v))
    }

    pub fn nodes_of(&self, kind: IdKind) -> impl Iterator<Item = &str> {
        self.nodes()
            .filter(move |(_, k)| *k == kind)
            .map(|(id, _)| id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_count_of(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    fn has_incoming(&self, id: &str, kind: EdgeKind, from_kind: IdKind) -> bool {
        self.edges
            .iter()
            .any(|e| e.kind == kind && e.to.0 == id && self.node_kind(&e.from.0) == Some(from_kind))
    }

    /// `{nodes:[{id,type}], edges:[{from,to,kind}]}` in natural order.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes()
            .map(|(id, kind)| json!({"id": id, "type": kind.as_str()}))
            .collect();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| json!({"from": e.from.0, "to": e.to.0, "kind": e.kind.as_str()}))
            .collect();
        json!({"nodes": nodes, "edges": edges})
    }

    /// Graphviz text; byte-identical for identical graphs.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph trace {\n  rankdir=LR;\n");
        for (id, kind) in self.nodes() {
            let shape = match kind {
                IdKind::Requirement => "note",
                IdKind::Story => "box",
                IdKind::Test => "ellipse",
                IdKind::Issue => "diamond",
                IdKind::Phase => "folder",
                IdKind::Adr => "component",
            };
            let _ = writeln!(out, "  \"{id}\" [shape={shape}];");
        }
        for e in &self.edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", e.from, e.to, e.kind.as_str());
        }
        out.push_str("}\n");
        out
    }
}

/// Build the graph for a valid bundle. References that do not resolve are
/// skipped rather than reported; validation owns that.
pub fn build_graph(bundle: &ArtifactBundle) -> TraceGraph {
    let mut g = TraceGraph::new();
    let ids = bundle
        .requirements
        .iter()
        .map(|r| &r.id)
        .chain(bundle.stories.iter().map(|s| &s.id))
        .chain(bundle.tests.iter().map(|t| &t.id))
        .chain(bundle.issues.iter().map(|i| &i.id))
        .chain(bundle.phases.iter().map(|p| &p.id));
    for id in ids {
        g.add_node(id);
    }
    for s in &bundle.stories {
        for r in &s.requirement_refs {
            g.add_edge(&s.id, r, EdgeKind::Covers);
        }
    }
    for t in &bundle.tests {
        g.add_edge(&t.id, &t.story_ref, EdgeKind::Covers);
    }
    for i in &bundle.issues {
        for t in &i.constraint_test_ids {
            g.add_edge(&i.id, t, EdgeKind::Constrains);
        }
        g.add_edge(&i.phase_ref, &i.id, EdgeKind::Contains);
    }
    for p in &bundle.phases {
        for t in &p.test_ids {
            g.add_edge(&p.id, t, EdgeKind::Contains);
        }
        for d in &p.depends_on {
            g.add_edge(&p.id, d, EdgeKind::DependsOn);
        }
    }
    g
}

fn phase_rank(id: &str) -> (u64, String) {
    (numeric_suffix(id).unwrap_or(u64::MAX), id.to_owned())
}

/// Topological order of phases: every phase comes after the phases it
/// depends on; among ready phases the lowest numeric id goes first.
pub fn phase_order(graph: &TraceGraph) -> Result<Vec<String>, GraphError> {
    let phases: Vec<&str> = graph.nodes_of(IdKind::Phase).collect();
    let mut waiting: HashMap<&str, usize> = phases.iter().map(|p| (*p, 0)).collect();
    let mut dependents: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in graph.edges().filter(|e| e.kind == EdgeKind::DependsOn) {
        *waiting.get_mut(e.from.0.as_str()).expect("phase node") += 1;
        dependents.entry(e.to.0.as_str()).or_default().push(e.from.0.as_str());
    }

    let mut ready: BinaryHeap<Reverse<(u64, String)>> = waiting
        .iter()
        .filter(|(_, n)| **n == 0)
        .map(|(p, _)| Reverse(phase_rank(p)))
        .collect();
    let mut order = Vec::with_capacity(phases.len());
    while let Some(Reverse((_, id))) = ready.pop() {
        for d in dependents.get(id.as_str()).into_iter().flatten() {
            let n = waiting.get_mut(d).expect("phase node");
            *n -= 1;
            if *n == 0 {
                ready.push(Reverse(phase_rank(d)));
            }
        }
        order.push(id);
    }

    if order.len() == phases.len() {
        return Ok(order);
    }
    let adjacency: BTreeMap<String, Vec<String>> = phases
        .iter()
        .map(|p| {
            let deps = graph
                .edges()
                .filter(|e| e.kind == EdgeKind::DependsOn && e.from.0 == *p)
                .map(|e| e.to.0.clone())
                .collect();
            (p.to_string(), deps)
        })
        .collect();
    let mut members: Vec<String> = cycles(&adjacency, true).into_iter().flatten().collect();
    members.sort_by(|a, b| natural_cmp(a, b));
    Err(GraphError::Cycle { members })
}

/// Dependency cycles among roadmap phases, one entry per strongly connected
/// component with more than one phase. Self-dependencies and references to
/// unknown phases are ignored here.
pub fn dependency_cycles(phases: &[RoadmapPhase]) -> Vec<Vec<String>> {
    let known: BTreeSet<&str> = phases.iter().map(|p| p.id.as_str()).collect();
    let adjacency: BTreeMap<String, Vec<String>> = phases
        .iter()
        .map(|p| {
            let deps = p
                .depends_on
                .iter()
                .filter(|d| **d != p.id && known.contains(d.as_str()))
                .cloned()
                .collect();
            (p.id.clone(), deps)
        })
        .collect();
    cycles(&adjacency, false)
}

/// Non-trivial strongly connected components (Tarjan), each sorted
/// naturally, listed in order of their first member.
fn cycles(adjacency: &BTreeMap<String, Vec<String>>, self_loops: bool) -> Vec<Vec<String>> {
    struct Tarjan<'a> {
        adj: &'a BTreeMap<String, Vec<String>>,
        index: HashMap<&'a str, usize>,
        low: HashMap<&'a str, usize>,
        stack: Vec<&'a str>,
        on_stack: BTreeSet<&'a str>,
        out: Vec<Vec<String>>,
        self_loops: bool,
    }
    impl<'a> Tarjan<'a> {
        fn visit(&mut self, v: &'a str) {
            let i = self.index.len();
            self.index.insert(v, i);
            self.low.insert(v, i);
            self.stack.push(v);
            self.on_stack.insert(v);
            for w in self.adj.get(v).into_iter().flatten() {
                let w = w.as_str();
                if !self.adj.contains_key(w) {
                    continue;
                }
                if !self.index.contains_key(w) {
                    self.visit(w);
                    let lw = self.low[w];
                    let lv = self.low.get_mut(v).expect("visited");
                    *lv = (*lv).min(lw);
                } else if self.on_stack.contains(w) {
                    let iw = self.index[w];
                    let lv = self.low.get_mut(v).expect("visited");
                    *lv = (*lv).min(iw);
                }
            }
            if self.low[v] == self.index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = self.stack.pop().expect("non-empty stack");
                    self.on_stack.remove(w);
                    comp.push(w.to_owned());
                    if w == v {
                        break;
                    }
                }
                let looped = self.self_loops
                    && self.adj.get(v).is_some_and(|ds| ds.iter().any(|d| d == v));
                if comp.len() > 1 || looped {
                    comp.sort_by(|a, b| natural_cmp(a, b));
                    self.out.push(comp);
                }
            }
        }
    }
    let mut t = Tarjan {
        adj: adjacency,
        index: HashMap::new(),
        low: HashMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        out: Vec::new(),
        self_loops,
    };
    let mut keys: Vec<&String> = adjacency.keys().collect();
    keys.sort_by(|a, b| natural_cmp(a, b));
    for v in keys {
        if !t.index.contains_key(v.as_str()) {
            t.visit(v);
        }
    }
    t.out.sort_by(|a, b| natural_cmp(&a[0], &b[0]));
    t.out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub uncovered_stories: Vec<String>,
    pub uncovered_requirements: Vec<String>,
    pub unconstrained_tests: Vec<String>,
    pub unphased_tests: Vec<String>,
    /// Fraction of stories covered by at least one test.
    pub story_coverage: f64,
    /// Fraction of requirements covered by at least one story.
    pub requirement_coverage: f64,
    /// Fraction of tests constrained by at least one issue.
    pub test_constraint_coverage: f64,
    /// Fraction of tests contained in at least one phase.
    pub test_phase_coverage: f64,
}

impl CoverageReport {
    pub fn is_complete(&self) -> bool {
        self.uncovered_stories.is_empty()
            && self.uncovered_requirements.is_empty()
            && self.unconstrained_tests.is_empty()
            && self.unphased_tests.is_empty()
    }

    pub fn ratios(&self) -> [f64; 4] {
        [
            self.story_coverage,
            self.requirement_coverage,
            self.test_constraint_coverage,
            self.test_phase_coverage,
        ]
    }
}

pub fn coverage_report(graph: &TraceGraph) -> CoverageReport {
    let gaps = |kind: IdKind, edge: EdgeKind, from: IdKind| -> (Vec<String>, f64) {
        let all: Vec<&str> = graph.nodes_of(kind).collect();
        let missing: Vec<String> = all
            .iter()
            .filter(|id| !graph.has_incoming(id, edge, from))
            .map(|id| id.to_string())
            .collect();
        let ratio = if all.is_empty() {
            1.0
        } else {
            (all.len() - missing.len()) as f64 / all.len() as f64
        };
        (missing, ratio)
    };
    let (uncovered_stories, story_coverage) = gaps(IdKind::Story, EdgeKind::Covers, IdKind::Test);
    let (uncovered_requirements, requirement_coverage) =
        gaps(IdKind::Requirement, EdgeKind::Covers, IdKind::Story);
    let (unconstrained_tests, test_constraint_coverage) =
        gaps(IdKind::Test, EdgeKind::Constrains, IdKind::Issue);
    let (unphased_tests, test_phase_coverage) = gaps(IdKind::Test, EdgeKind::Contains, IdKind::Phase);
    CoverageReport {
        uncovered_stories,
        uncovered_requirements,
        unconstrained_tests,
        unphased_tests,
        story_coverage,
        requirement_coverage,
        test_constraint_coverage,
        test_phase_coverage,
    }
}

/// Every artifact that reaches `id` along forward edges, i.e. everything
/// that depends on or is gated by it. Excludes `id` itself.
pub fn impact_of(graph: &TraceGraph, id: &str) -> Result<Vec<String>, GraphError> {
    if !graph.contains(id) {
        return Err(GraphError::UnknownId(id.to_owned()));
    }
    let mut reverse: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in graph.edges() {
        reverse.entry(e.to.0.as_str()).or_default().push(e.from.0.as_str());
    }
    let mut seen: BTreeSet<NaturalKey> = BTreeSet::new();
    let mut queue = VecDeque::from([id]);
    while let Some(v) = queue.pop_front() {
        for &u in reverse.get(v).into_iter().flatten() {
            if u != id && seen.insert(NaturalKey::from(u)) {
                queue.push_back(u);
            }
        }
    }
    Ok(seen.into_iter().map(|k| k.0).collect())
}
