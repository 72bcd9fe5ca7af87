//! Model rewrites: breaking failure self-loops, reducing edge and branch
//! coverage to state coverage, and compressing chains of forced steps.
//!
//! Fresh ids use the reserved `~` character: `<head>~L<edge>` for loop
//! breakers, `<edge>~E` for edge coverage and `<edge>~B<target>` for branch
//! coverage. An added edge takes the id of the vertex it leaves. Collisions
//! get a numeric suffix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Edge, EdgeKind, ModelDecl, VertexId};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TransformReport {
    pub added_vertices: Vec<VertexId>,
    pub added_edges: Vec<Edge>,
    /// New forms of edges that kept their id.
    pub rewritten_edges: Vec<Edge>,
    pub removed_vertices: Vec<VertexId>,
    pub removed_edges: Vec<String>,
    pub interior_map: BTreeMap<String, Vec<VertexId>>,
}

impl TransformReport {
    pub fn is_empty(&self) -> bool {
        *self == TransformReport::default()
    }

    /// Replays the rewrite on `input`.
    pub fn apply(&self, input: &ModelDecl) -> ModelDecl {
        let mut out = input.clone();
        for v in &self.removed_vertices {
            out.vertices.remove(v);
        }
        out.vertices.extend(self.added_vertices.iter().cloned());
        let removed: BTreeSet<&str> = self.removed_edges.iter().map(String::as_str).collect();
        let rewritten: BTreeMap<&str, &Edge> =
            self.rewritten_edges.iter().map(|e| (e.id.as_str(), e)).collect();
        out.edges = input
            .edges
            .iter()
            .filter(|e| !removed.contains(e.id.as_str()))
            .map(|e| rewritten.get(e.id.as_str()).map_or_else(|| e.clone(), |r| (*r).clone()))
            .chain(self.added_edges.iter().cloned())
            .collect();
        out.sort_edges();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    BreakSelfLoops,
    EdgeCoverage,
    BranchCoverage,
    CompressChains,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::BreakSelfLoops => "break-self-loops",
            TransformKind::EdgeCoverage => "edge-coverage",
            TransformKind::BranchCoverage => "branch-coverage",
            TransformKind::CompressChains => "compress-chains",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("unknown transform `{0}`")]
    Unknown(String),
    #[error("edge-coverage and branch-coverage cannot be combined")]
    ConflictingCoverage,
}

impl FromStr for TransformKind {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "break-self-loops" => TransformKind::BreakSelfLoops,
            "edge-coverage" => TransformKind::EdgeCoverage,
            "branch-coverage" => TransformKind::BranchCoverage,
            "compress-chains" => TransformKind::CompressChains,
            other => return Err(TransformError::Unknown(other.to_string())),
        })
    }
}

/// Parses a comma-separated transform list.
pub fn parse_transform_list(s: &str) -> Result<Vec<TransformKind>, TransformError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Applies the requested transforms in the fixed order break-self-loops,
/// coverage transform, compress-chains, whatever order they were given in.
pub fn apply_transforms(
    decl: &ModelDecl,
    kinds: &[TransformKind],
) -> Result<(ModelDecl, Vec<(TransformKind, TransformReport)>), TransformError> {
    let wanted: BTreeSet<TransformKind> = kinds.iter().copied().collect();
    if wanted.contains(&TransformKind::EdgeCoverage) && wanted.contains(&TransformKind::BranchCoverage) {
        return Err(TransformError::ConflictingCoverage);
    }
    let mut cur = decl.clone();
    let mut reports = Vec::new();
    for kind in wanted {
        let (next, report) = match kind {
            TransformKind::BreakSelfLoops => break_self_loops(&cur),
            TransformKind::EdgeCoverage => edge_coverage_transform(&cur),
            TransformKind::BranchCoverage => branch_coverage_transform(&cur),
            TransformKind::CompressChains => compress_chains(&cur),
        };
        cur = next;
        reports.push((kind, report));
    }
    Ok((cur, reports))
}

struct Namer {
    vertices: BTreeSet<String>,
    edges: BTreeSet<String>,
}

impl Namer {
    fn new(decl: &ModelDecl) -> Self {
        let mut vertices = decl.vertices.clone();
        vertices.extend(decl.interior_vertices());
        Namer {
            vertices,
            edges: decl.edges.iter().map(|e| e.id.clone()).collect(),
        }
    }

    fn pick(taken: &mut BTreeSet<String>, base: String) -> String {
        let mut id = base.clone();
        let mut n = 2;
        while taken.contains(&id) {
            id = format!("{base}-{n}");
            n += 1;
        }
        taken.insert(id.clone());
        id
    }

    fn vertex(&mut self, base: String) -> String {
        Self::pick(&mut self.vertices, base)
    }

    fn edge(&mut self, base: String) -> String {
        Self::pick(&mut self.edges, base)
    }
}

fn finish(decl: &ModelDecl, report: TransformReport) -> (ModelDecl, TransformReport) {
    (report.apply(decl), report)
}

/// Replaces the head `h` in the tail of each real edge `e` by a fresh
/// virtual vertex that leads back to `h`, so the failure outcome counts as
/// new coverage until it has been observed once.
pub fn break_self_loops(decl: &ModelDecl) -> (ModelDecl, TransformReport) {
    let mut names = Namer::new(decl);
    let mut report = TransformReport::default();
    for e in &decl.edges {
        if e.kind != EdgeKind::Real || !e.has_self_loop() {
            continue;
        }
        let v = names.vertex(format!("{}~L{}", e.head, e.id));
        let back = names.edge(v.clone());
        let mut rewritten = e.clone();
        rewritten.tail.retain(|t| *t != e.head);
        rewritten.tail.push(v.clone());
        rewritten.tail.sort();
        report.added_vertices.push(v.clone());
        report
            .added_edges
            .push(Edge::with_kind(EdgeKind::Virtual, &back, &v, [e.head.clone()]));
        report.rewritten_edges.push(rewritten);
    }
    finish(decl, report)
}

/// `e: h -> T` becomes `e: h -> {e~E}` and `e~E: e~E -> T`; visiting
/// `e~E` means `e` was exercised.
pub fn edge_coverage_transform(decl: &ModelDecl) -> (ModelDecl, TransformReport) {
    let mut names = Namer::new(decl);
    let mut report = TransformReport::default();
    for e in &decl.edges {
        if e.kind != EdgeKind::Real {
            continue;
        }
        let w = names.vertex(format!("{}~E", e.id));
        let out = names.edge(w.clone());
        let mut rewritten = e.clone();
        rewritten.tail = vec![w.clone()];
        let mut second = Edge::with_kind(EdgeKind::Virtual, &out, &w, e.tail.clone());
        second.label = e.label.clone();
        report.added_vertices.push(w);
        report.added_edges.push(second);
        report.rewritten_edges.push(rewritten);
    }
    finish(decl, report)
}

/// `e: h -> T` becomes `e: h -> {e~B<t> | t in T}` plus `e~B<t> -> {t}`;
/// visiting `e~B<t>` means outcome `t` of `e` was observed.
pub fn branch_coverage_transform(decl: &ModelDecl) -> (ModelDecl, TransformReport) {
    let mut names = Namer::new(decl);
    let mut report = TransformReport::default();
    for e in &decl.edges {
        if e.kind != EdgeKind::Real {
            continue;
        }
        let mut rewritten = e.clone();
        rewritten.tail.clear();
        for t in &e.tail {
            let w = names.vertex(format!("{}~B{}", e.id, t));
            let out = names.edge(w.clone());
            rewritten.tail.push(w.clone());
            report
                .added_edges
                .push(Edge::with_kind(EdgeKind::Virtual, &out, &w, [t.clone()]));
            report.added_vertices.push(w);
        }
        rewritten.tail.sort();
        report.rewritten_edges.push(rewritten);
    }
    finish(decl, report)
}

/// Collapses every maximal run `h -e1-> v1 -e2-> ... -ek-> t` (k >= 2) of
/// singleton-tail edges, whose interior states are non-initial with exactly
/// one way in and one way out, into `e1: h -> {t}` carrying the interior
/// states. Interiors leave the vertex set and are marked when the edge fires.
pub fn compress_chains(decl: &ModelDecl) -> (ModelDecl, TransformReport) {
    let mut out_edges: BTreeMap<&str, Vec<&Edge>> = BTreeMap::new();
    let mut incoming: BTreeMap<&str, Vec<&Edge>> = BTreeMap::new();
    for e in &decl.edges {
        out_edges.entry(e.head.as_str()).or_default().push(e);
        for t in &e.tail {
            incoming.entry(t.as_str()).or_default().push(e);
        }
    }
    let single = |v: &str, m: &BTreeMap<&str, Vec<&Edge>>| -> bool {
        matches!(m.get(v).map(Vec::as_slice), Some([e]) if e.tail.len() == 1)
    };
    let interior_ok = |v: &str| v != decl.initial && single(v, &out_edges) && single(v, &incoming);
    let next = |v: &str| -> &Edge { out_edges[v][0] };

    let mut report = TransformReport::default();
    for e1 in &decl.edges {
        if e1.tail.len() != 1 || interior_ok(&e1.head) || !interior_ok(&e1.tail[0]) {
            continue;
        }
        let head = e1.head.as_str();
        let mut interiors = vec![e1.tail[0].as_str()];
        let mut path = vec![e1];
        let target = loop {
            let step = next(interiors[interiors.len() - 1]);
            path.push(step);
            let t = step.tail[0].as_str();
            if t == head {
                // keep the return step so the compressed edge is not a self-loop
                path.pop();
                break interiors.pop();
            }
            if !interior_ok(t) {
                break Some(t);
            }
            interiors.push(t);
        };
        let Some(target) = target else { continue };
        if interiors.is_empty() {
            continue;
        }
        let mut merged = e1.clone();
        merged.tail = vec![target.to_string()];
        merged.compressed_interior.clear();
        for (i, step) in path.iter().enumerate() {
            merged.compressed_interior.extend(step.compressed_interior.iter().cloned());
            if let Some(v) = interiors.get(i) {
                merged.compressed_interior.push(v.to_string());
            }
        }
        report
            .interior_map
            .insert(merged.id.clone(), merged.compressed_interior.clone());
        report.removed_vertices.extend(interiors.iter().map(|v| v.to_string()));
        report.removed_edges.extend(path[1..].iter().map(|e| e.id.clone()));
        report.rewritten_edges.push(merged);
    }
    finish(decl, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{Avoider, RandomFair};
    use crate::game::{run_session, GameState, Limits, Termination};
    use crate::model::fixtures::*;
    use crate::model::{parse_model, serialize_model, validate};
    use crate::provider::gen_chain;
    use crate::rank::{oracle_ranks, Rank};
    use crate::GameGraph;
    use proptest::prelude::*;

    fn decl(text: &str) -> ModelDecl {
        parse_model(text).unwrap()
    }

    #[test]
    fn loop_breaking_on_fail_loop() {
        let (out, report) = break_self_loops(&decl(G3));
        assert_eq!(report.added_vertices, vec!["s0~Lf"]);
        let f = out.edge("f").unwrap();
        assert_eq!(f.tail, vec!["s0~Lf", "s1"]);
        let back = out.edge("s0~Lf").unwrap();
        assert_eq!((back.head.as_str(), back.tail.clone()), ("s0~Lf", vec!["s0".to_string()]));
        assert_eq!(back.kind, EdgeKind::Virtual);
        assert!(out.edges.iter().all(|e| !e.has_self_loop()));

        let g = GameGraph::from_decl(&out).unwrap();
        let r = oracle_ranks(&g, true);
        let v = |id| r.vertex[g.vertex(id).unwrap()];
        assert_eq!(v("s0~Lf"), Rank::Finite(1));
        assert_eq!(v("s1"), Rank::Finite(1));
        assert_eq!(v("s0"), Rank::Finite(2));
        assert_eq!(r.edge[g.edge_by_id("f").unwrap()], Rank::Finite(1));

        // the rewritten file re-parses
        assert_eq!(parse_model(&serialize_model(&out)).unwrap(), out);
    }

    #[test]
    fn loop_breaking_edge_cases() {
        let (out, report) = break_self_loops(&decl(G1));
        assert!(report.is_empty());
        assert_eq!(out, decl(G1));

        let (out, _) = break_self_loops(&decl("initial s0\nedge x s0 -> s0\n"));
        assert_eq!(out.edge("x").unwrap().tail, vec!["s0~Lx"]);
        assert!(out.edge("s0~Lx").is_some());
    }

    #[test]
    fn fresh_ids_avoid_collisions() {
        let mut d = decl(G3);
        d.vertices.insert("s0~Lf".into());
        assert!(d.is_transformed());
        let (out, report) = break_self_loops(&d);
        assert_eq!(report.added_vertices, vec!["s0~Lf-2"]);
        assert!(validate(&out).is_empty());
    }

    #[test]
    fn edge_coverage_on_chain() {
        let (out, report) = edge_coverage_transform(&decl(G2));
        assert_eq!(report.added_vertices, vec!["e1~E", "e2~E"]);
        assert_eq!(out.edges.len(), 4);
        assert_eq!(out.vertices.len(), 5);
        let (t, s) = run_session(&out, &mut RandomFair::new(0), &Limits::default()).unwrap();
        assert_eq!(t.moves.len(), 4);
        assert_eq!(s.terminated, Some(Termination::AllMarked));
        assert_eq!(s.virtual_marked, 2);

        let (out, report) = edge_coverage_transform(&decl("initial s0\n"));
        assert!(report.is_empty());
        assert_eq!(out, decl("initial s0\n"));
    }

    #[test]
    fn edge_coverage_tracks_exercised_stimuli() {
        let (out, _) = edge_coverage_transform(&decl(G1));
        let mut gs = GameState::start(&out).unwrap();
        let w_a = gs.graph().vertex("a~E").unwrap();
        assert!(!gs.is_marked(w_a));
        let e = gs.tester_choose().unwrap();
        assert_eq!(gs.graph().edge(e).id, "a");
        gs.apply_response(e, w_a).unwrap();
        assert!(gs.is_marked(w_a));
    }

    #[test]
    fn branch_coverage_on_diamond() {
        let (out, report) = branch_coverage_transform(&decl(G1));
        assert_eq!(out.edge("a").unwrap().tail, vec!["a~Bs1", "a~Bs2"]);
        assert_eq!(report.added_vertices.len(), 4);
        let (_, _) = run_session(&out, &mut Avoider, &Limits::default()).unwrap();
        let mut gs = GameState::start(&out).unwrap();
        gs.run(&mut Avoider, &Limits::default()).unwrap();
        let g = gs.graph();
        let hit: Vec<bool> = ["a~Bs1", "a~Bs2"]
            .iter()
            .map(|id| g.is_marked(g.vertex(id).unwrap()))
            .collect();
        assert_eq!(hit.iter().filter(|&&h| h).count(), 1);

        // singleton tails behave like edge coverage
        let (b, _) = branch_coverage_transform(&decl(G2));
        assert_eq!(b.edge("e1").unwrap().tail, vec!["e1~Bs1"]);
        assert_eq!(b.edges.len(), 4);
    }

    #[test]
    fn chain_compression_on_chain3() {
        let (out, report) = compress_chains(&decl(G2));
        assert_eq!(out.edges.len(), 1);
        let e = out.edge("e1").unwrap();
        assert_eq!(e.tail, vec!["s2"]);
        assert_eq!(e.compressed_interior, vec!["s1"]);
        assert!(!out.vertices.contains("s1"));
        assert_eq!(report.interior_map["e1"], vec!["s1"]);
        assert!(validate(&out).is_empty());

        let (t, s) = run_session(&out, &mut RandomFair::new(4), &Limits::default()).unwrap();
        assert_eq!(t.moves.len(), 1);
        assert_eq!(s.states_marked_e, 3);
        assert_eq!(s.terminated, Some(Termination::AllMarked));
        let text = serialize_model(&out);
        assert!(text.contains("interior e1 s1\n"), "{text}");
        assert_eq!(parse_model(&text).unwrap(), out);
    }

    #[test]
    fn compression_leaves_branching_models_alone() {
        let (out, report) = compress_chains(&decl(G1));
        assert!(report.is_empty());
        assert_eq!(out, decl(G1));
    }

    #[test]
    fn compression_keeps_cycles_off_the_head() {
        let d = decl("initial s0\nedge a s0 -> s1\nedge b s1 -> s2\nedge c s2 -> s0\n");
        let (out, _) = compress_chains(&d);
        assert_eq!(out.edge("a").unwrap().tail, vec!["s2"]);
        assert_eq!(out.edge("a").unwrap().compressed_interior, vec!["s1"]);
        assert!(out.edge("c").is_some());
        assert!(out.edges.iter().all(|e| !e.has_self_loop()));
    }

    /// Walking a plain chain marks a new state every move, so its current
    /// state never has rank above 2; compressed, the single edge is fresh.
    #[test]
    fn plain_chain_rank_with_and_without_compression() {
        let chain = gen_chain(5).unwrap();
        let (_, plain) = run_session(&chain, &mut Avoider, &Limits::default()).unwrap();
        let (packed, _) = compress_chains(&chain);
        let (_, comp) = run_session(&packed, &mut Avoider, &Limits::default()).unwrap();
        assert_eq!(plain.max_rank_r, Rank::Finite(2));
        assert_eq!(comp.max_rank_r, Rank::Finite(1));
        assert_eq!(plain.states_marked_e, comp.states_marked_e);
    }

    /// A preparation chain that has to be re-walked after each excursion.
    pub(crate) fn hub(prep: usize, targets: usize) -> ModelDecl {
        let mut d = ModelDecl::new("p0");
        for i in 1..=prep {
            d = d.with_edge(Edge::real(&format!("p{i}"), &format!("p{}", i - 1), [format!("p{i}")]));
        }
        for j in 0..targets {
            d = d.with_edge(Edge::real(&format!("go{j}"), &format!("p{prep}"), [format!("t{j}")]));
            d = d.with_edge(Edge::real(&format!("back{j}"), &format!("t{j}"), ["p0"]));
        }
        d
    }

    #[test]
    fn compression_lowers_rank_on_repeated_preparation() {
        let d = hub(8, 3);
        let (packed, report) = compress_chains(&d);
        assert_eq!(report.removed_vertices.len(), 10);
        let (_, plain) = run_session(&d, &mut RandomFair::new(0), &Limits::default()).unwrap();
        let (_, comp) = run_session(&packed, &mut RandomFair::new(0), &Limits::default()).unwrap();
        assert_eq!(plain.terminated, Some(Termination::AllMarked));
        assert_eq!(comp.terminated, Some(Termination::AllMarked));
        assert_eq!(plain.states_marked_e, comp.states_marked_e);
        assert!(comp.max_rank_r < plain.max_rank_r, "{comp:?} vs {plain:?}");
    }

    #[test]
    fn transform_list_and_order() {
        assert_eq!(
            parse_transform_list("compress-chains,break-self-loops").unwrap(),
            vec![TransformKind::CompressChains, TransformKind::BreakSelfLoops]
        );
        assert!(parse_transform_list("bogus").is_err());
        let kinds = parse_transform_list("compress-chains,break-self-loops").unwrap();
        let (_, reports) = apply_transforms(&decl(G3), &kinds).unwrap();
        let order: Vec<TransformKind> = reports.iter().map(|(k, _)| *k).collect();
        assert_eq!(order, vec![TransformKind::BreakSelfLoops, TransformKind::CompressChains]);
        assert_eq!(
            apply_transforms(&decl(G3), &[TransformKind::EdgeCoverage, TransformKind::BranchCoverage]),
            Err(TransformError::ConflictingCoverage)
        );
    }

    fn arb_model() -> impl Strategy<Value = ModelDecl> {
        (2usize..7).prop_flat_map(|n| {
            proptest::collection::vec(
                (0..n, proptest::collection::btree_set(0..n, 1..4)),
                0..10,
            )
            .prop_map(move |edges| {
                let mut d = ModelDecl::new("v0");
                for i in 0..n {
                    d.vertices.insert(format!("v{i}"));
                }
                for (i, (h, t)) in edges.into_iter().enumerate() {
                    d.edges.push(Edge::real(
                        &format!("e{i}"),
                        &format!("v{h}"),
                        t.into_iter().map(|x| format!("v{x}")),
                    ));
                }
                d.sort_edges();
                d
            })
        })
    }

    proptest! {
        #[test]
        fn loop_breaking_is_idempotent(d in arb_model()) {
            let (once, _) = break_self_loops(&d);
            let (twice, report) = break_self_loops(&once);
            prop_assert!(report.is_empty());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn reports_replay_and_outputs_validate(d in arb_model()) {
            for f in [break_self_loops, edge_coverage_transform, branch_coverage_transform, compress_chains] {
                let (out, report) = f(&d);
                prop_assert!(validate(&out).is_empty(), "{:?}", validate(&out));
                prop_assert_eq!(report.apply(&d), out.clone());
                prop_assert_eq!(parse_model(&serialize_model(&out)).unwrap(), out);
            }
        }

        #[test]
        fn broken_loops_are_usable(d in arb_model()) {
            let (out, report) = break_self_loops(&d);
            let g = GameGraph::from_decl(&out).unwrap();
            let r = oracle_ranks(&g, true);
            for e in &report.rewritten_edges {
                let others_reachable = e.tail.iter().all(|t| r.vertex[g.vertex(t).unwrap()].is_reachable());
                if others_reachable {
                    prop_assert!(r.edge[g.edge_by_id(&e.id).unwrap()].is_reachable());
                }
            }
        }

        #[test]
        fn compressed_ranks_track_oracle(d in arb_model(), seed: u64) {
            let (out, _) = compress_chains(&d);
            let mut gs = GameState::start(&out).unwrap();
            let mut adv = RandomFair::new(seed);
            for _ in 0..30 {
                let oracle = gs.oracle();
                for v in 0..gs.graph().vertex_count() {
                    prop_assert_eq!(gs.rank_of(v), oracle.vertex[v]);
                }
                if gs.is_terminal() || gs.all_marked() {
                    break;
                }
                let e = gs.tester_choose().unwrap();
                let t = crate::adversary::Adversary::respond(&mut adv, &gs, e).unwrap();
                gs.apply_response(e, t).unwrap();
            }
        }

        #[test]
        fn edge_coverage_matches_traversals(d in arb_model(), seed: u64) {
            let (out, _) = edge_coverage_transform(&d);
            let mut gs = GameState::start(&out).unwrap();
            let (t, _) = gs.run(&mut RandomFair::new(seed), &Limits { max_moves: 500 }).unwrap();
            let traversed: BTreeSet<String> = t.moves.iter()
                .filter(|m| d.edge(&m.edge).is_some())
                .map(|m| m.edge.clone())
                .collect();
            let g = gs.graph();
            let covered: BTreeSet<String> = d.edges.iter()
                .filter(|e| g.is_marked(g.vertex(&format!("{}~E", e.id)).unwrap()))
                .map(|e| e.id.clone())
                .collect();
            prop_assert_eq!(traversed, covered);
        }
    }
}
