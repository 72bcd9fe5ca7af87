//! Reachability ranks on the game graph.
//!
//! An edge's rank is the maximum rank of its tail (0 for an empty tail) and a
//! vertex's rank is one more than the smallest rank among its reachable
//! incident edges, taking the minimal solution. [`oracle_ranks`] computes this
//! by plain round-based iteration; [`RankTable`] maintains it incrementally
//! in increasing rank order, settling only as much as callers ask for.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::graph::{EIx, EdgeRef, GameGraph, GraphError, VIx};
use crate::model::Edge;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rank {
    Finite(u64),
    /// Greater than every finite rank.
    Unreachable,
}

impl Rank {
    pub const ZERO: Rank = Rank::Finite(0);

    pub fn finite(self) -> Option<u64> {
        match self {
            Rank::Finite(n) => Some(n),
            Rank::Unreachable => None,
        }
    }

    pub fn is_reachable(self) -> bool {
        matches!(self, Rank::Finite(_))
    }

    pub fn succ(self) -> Rank {
        match self {
            Rank::Finite(n) => Rank::Finite(n.checked_add(1).expect("rank overflow")),
            Rank::Unreachable => Rank::Unreachable,
        }
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank::Finite(n) => write!(f, "{n}"),
            Rank::Unreachable => f.write_str("unreachable"),
        }
    }
}

impl Serialize for Rank {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Rank::Finite(n) => s.serialize_u64(*n),
            Rank::Unreachable => s.serialize_str("unreachable"),
        }
    }
}

/// Exact ranks of every vertex and edge of a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankSnapshot {
    pub vertex: Vec<Rank>,
    pub edge: Vec<Rank>,
}

impl RankSnapshot {
    pub fn vertex_rank(&self, v: VIx) -> Rank {
        self.vertex[v]
    }

    pub fn edge_rank(&self, e: EIx) -> Rank {
        self.edge[e]
    }

    /// `vertex <id> rank <r>` lines then `edge <id> rank <r>` lines, sorted by
    /// id. Edges not taking part in the computation are skipped.
    pub fn listing(&self, g: &GameGraph, include_dead: bool) -> String {
        let mut out = String::new();
        for v in g.vertices_by_id() {
            out.push_str(&format!("vertex {} rank {}\n", g.vertex_id(v), self.vertex[v]));
        }
        for e in g.edges_by_id() {
            if include_dead || g.is_live(e) {
                out.push_str(&format!("edge {} rank {}\n", g.edge(e).id, self.edge[e]));
            }
        }
        out
    }
}

/// Naive fixpoint: start everything at Unreachable and recompute every edge
/// and vertex from the previous round until nothing changes. With
/// `include_dead`, deferred edges take part as if live. Edges left out are
/// reported as Unreachable.
pub fn oracle_ranks(g: &GameGraph, include_dead: bool) -> RankSnapshot {
    let n = g.vertex_count();
    let m = g.edge_count();
    let active: Vec<bool> = (0..m).map(|e| include_dead || g.is_live(e)).collect();
    let mut vertex = vec![Rank::Unreachable; n];
    let mut edge = vec![Rank::Unreachable; m];
    loop {
        let next_edge: Vec<Rank> = (0..m)
            .map(|e| {
                if !active[e] {
                    return Rank::Unreachable;
                }
                if g.is_fresh(e) {
                    return Rank::ZERO;
                }
                g.edge(e)
                    .tail
                    .iter()
                    .map(|&t| vertex[t])
                    .max()
                    .unwrap_or(Rank::ZERO)
            })
            .collect();
        let mut next_vertex = vec![Rank::Unreachable; n];
        for (v, slot) in next_vertex.iter_mut().enumerate() {
            if g.has_base(v) {
                *slot = Rank::Finite(1);
            }
        }
        for e in 0..m {
            if active[e] {
                let h = g.edge(e).head;
                next_vertex[h] = next_vertex[h].min(edge[e].succ());
            }
        }
        if next_vertex == vertex && next_edge == edge {
            return RankSnapshot { vertex, edge };
        }
        vertex = next_vertex;
        edge = next_edge;
    }
}

/// Work counters for one rank table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WorkStats {
    /// Rank updates and derivation checks on vertices and edges.
    pub relaxations: u64,
    /// Heap pushes and pops.
    pub queue_ops: u64,
    /// Head plus tail entries of every live edge.
    #[serde(rename = "live_size_H_prime")]
    pub live_size_h_prime: u64,
    #[serde(rename = "markings_E")]
    pub markings_e: u64,
    /// Largest exact rank of the current vertex, as recorded by the session.
    #[serde(rename = "max_rank_R")]
    pub max_rank_r: u64,
}

const NONE: u64 = u64::MAX;

/// Lazily maintained ranks bound to one [`GameGraph`].
///
/// Invariants between calls:
/// * a settled item's rank is exact, and an unsettled item's stored rank is a
///   lower bound on its exact rank;
/// * an edge is settled iff it is live and its whole tail is settled;
/// * each unsettled vertex has a heap entry no larger than one plus the rank
///   of each of its settled incident edges;
/// * no unsettled vertex has an exact rank below the smallest heap key.
///
/// The heap is ordered by (rank, vertex index) and may hold stale entries.
#[derive(Debug, Clone)]
pub struct RankTable {
    v_settled: Vec<bool>,
    /// Exact when settled, lower bound otherwise.
    v_rank: Vec<u64>,
    /// One plus the smallest settled incident edge rank seen so far.
    tentative: Vec<u64>,
    /// Set when the edge providing `tentative` was invalidated.
    dirty: Vec<bool>,
    /// Settled incident edges (trivial included) whose rank is one below the
    /// vertex's rank.
    support: Vec<u32>,
    last_push: Vec<u64>,
    e_settled: Vec<bool>,
    e_rank: Vec<u64>,
    pending: Vec<u32>,
    heap: BinaryHeap<Reverse<(u64, VIx)>>,
    pushes: u64,
    /// Value of `pushes` when the heap last ran dry.
    drained_at: Option<u64>,
    work: WorkStats,
}

impl RankTable {
    /// A table with nothing settled yet.
    pub fn new(g: &GameGraph) -> Self {
        let mut t = RankTable {
            v_settled: Vec::new(),
            v_rank: Vec::new(),
            tentative: Vec::new(),
            dirty: Vec::new(),
            support: Vec::new(),
            last_push: Vec::new(),
            e_settled: Vec::new(),
            e_rank: Vec::new(),
            pending: Vec::new(),
            heap: BinaryHeap::new(),
            pushes: 0,
            drained_at: None,
            work: WorkStats::default(),
        };
        t.sync(g);
        t.work.live_size_h_prime = g.live_size() as u64;
        t
    }

    /// Batch computation: settle everything whose rank is at most
    /// `threshold` (pass [`Rank::Unreachable`] for a full computation).
    pub fn compute(g: &GameGraph, threshold: Rank) -> Self {
        let mut t = RankTable::new(g);
        t.advance(g, threshold);
        t
    }

    /// Grows the per-item arrays to cover vertices and edges added to `g`.
    fn sync(&mut self, g: &GameGraph) {
        for v in self.v_settled.len()..g.vertex_count() {
            self.v_settled.push(false);
            self.v_rank.push(1);
            self.tentative.push(NONE);
            self.dirty.push(false);
            self.support.push(0);
            self.last_push.push(0);
            if g.has_base(v) {
                self.tentative[v] = 1;
                self.push(1, v);
            }
        }
        for e in self.e_settled.len()..g.edge_count() {
            self.e_settled.push(false);
            self.e_rank.push(0);
            let pending = g.edge(e).tail.iter().filter(|&&t| !self.v_settled[t]).count();
            self.pending.push(pending as u32);
            if g.is_live(e) && pending == 0 {
                self.settle_edge(g, e);
            }
        }
    }

    fn push(&mut self, key: u64, v: VIx) {
        self.pushes += 1;
        self.last_push[v] = self.pushes;
        self.work.queue_ops += 1;
        self.heap.push(Reverse((key, v)));
    }

    fn min_key(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse((k, _))| *k)
    }

    fn known_unreachable(&self, v: VIx) -> bool {
        !self.v_settled[v] && self.drained_at.is_some_and(|d| self.last_push[v] <= d)
    }

    /// Processes one heap entry; false when the heap is empty.
    fn step(&mut self, g: &GameGraph) -> bool {
        let Some(Reverse((key, v))) = self.heap.pop() else {
            self.drained_at = Some(self.pushes);
            return false;
        };
        self.work.queue_ops += 1;
        if self.v_settled[v] {
            return true;
        }
        if self.dirty[v] {
            self.dirty[v] = false;
            let fresh = self.best_settled_edge(g, v);
            self.tentative[v] = fresh;
            if fresh != key {
                debug_assert!(fresh > key, "stale heap entry above the tentative rank");
                if fresh != NONE {
                    self.push(fresh, v);
                }
                return true;
            }
        } else if self.tentative[v] != key {
            return true;
        }
        self.settle_vertex(g, v, key);
        true
    }

    fn best_settled_edge(&mut self, g: &GameGraph, v: VIx) -> u64 {
        let mut best = if g.has_base(v) { 1 } else { NONE };
        for &e in g.live_out(v) {
            self.work.relaxations += 1;
            if self.e_settled[e] {
                best = best.min(self.e_rank[e] + 1);
            }
        }
        best
    }

    fn settle_vertex(&mut self, g: &GameGraph, v: VIx, rank: u64) {
        debug_assert!(rank >= self.v_rank[v], "rank of {} decreased", g.vertex_id(v));
        self.work.relaxations += 1;
        self.v_settled[v] = true;
        self.v_rank[v] = rank;
        let mut support = u32::from(g.has_base(v) && rank == 1);
        for &e in g.live_out(v) {
            if self.e_settled[e] && self.e_rank[e] + 1 == rank {
                support += 1;
            }
        }
        debug_assert!(support > 0);
        self.support[v] = support;
        for &e in g.live_uses(v) {
            self.work.relaxations += 1;
            self.pending[e] -= 1;
            if self.pending[e] == 0 {
                self.settle_edge(g, e);
            }
        }
    }

    fn settle_edge(&mut self, g: &GameGraph, e: EIx) {
        let data = g.edge(e);
        self.work.relaxations += data.tail.len() as u64;
        let rank = data.tail.iter().map(|&t| self.v_rank[t]).max().unwrap_or(0);
        self.e_settled[e] = true;
        self.e_rank[e] = rank;
        let head = data.head;
        let via = rank.checked_add(1).expect("rank overflow");
        if self.v_settled[head] {
            debug_assert!(via >= self.v_rank[head]);
            if via == self.v_rank[head] {
                self.support[head] += 1;
            }
        } else if via < self.tentative[head] {
            self.tentative[head] = via;
            self.push(via, head);
        }
    }

    /// Un-settles `start` and everything whose settled derivation used it.
    fn invalidate(&mut self, g: &GameGraph, start: VIx) {
        let mut work = vec![start];
        while let Some(v) = work.pop() {
            if !self.v_settled[v] {
                continue;
            }
            self.work.relaxations += 1;
            self.v_settled[v] = false;
            self.dirty[v] = true;
            self.push(self.v_rank[v], v);
            for &e in g.live_uses(v) {
                self.work.relaxations += 1;
                self.pending[e] += 1;
                if !self.e_settled[e] {
                    continue;
                }
                self.e_settled[e] = false;
                let head = g.edge(e).head;
                let via = self.e_rank[e] + 1;
                if self.v_settled[head] {
                    if via == self.v_rank[head] {
                        self.support[head] -= 1;
                        if self.support[head] == 0 {
                            work.push(head);
                        }
                    }
                } else if via == self.tentative[head] {
                    self.dirty[head] = true;
                }
            }
        }
    }

    /// Settles everything with rank at most `threshold`.
    pub fn advance(&mut self, g: &GameGraph, threshold: Rank) {
        while let Some(k) = self.min_key() {
            if Rank::Finite(k) > threshold {
                return;
            }
            self.step(g);
        }
        self.drained_at = Some(self.pushes);
    }

    /// Resumes processing until `v`'s rank is exact; Unreachable when the
    /// heap runs dry first.
    pub fn ensure_settled(&mut self, g: &GameGraph, v: VIx) -> Rank {
        loop {
            if self.v_settled[v] {
                return Rank::Finite(self.v_rank[v]);
            }
            if self.known_unreachable(v) || !self.step(g) {
                return Rank::Unreachable;
            }
        }
    }

    /// Marks `v`: drops its trivial edge, promotes its dead edges and inserts
    /// `generated` (edges produced for `v` by a lazy provider).
    pub fn apply_marking(
        &mut self,
        g: &mut GameGraph,
        v: VIx,
        generated: &[Edge],
    ) -> Result<(), GraphError> {
        if g.is_marked(v) {
            return Err(GraphError::AlreadyMarked(g.vertex_id(v).to_string()));
        }
        for e in generated {
            g.check_generated(v, e)?;
        }
        // The trivial edge is gone once `g.mark` runs; retract what it backed
        // first, unless a fresh edge takes over.
        if !g.base_after_marking(v, generated) {
            self.retract_base(g, v);
        }
        let promoted = g.mark(v)?;
        for e in generated {
            g.insert_live(e);
        }
        self.sync(g);
        for e in promoted {
            self.pending[e] = g.edge(e).tail.iter().filter(|&&t| !self.v_settled[t]).count() as u32;
            if self.pending[e] == 0 {
                self.settle_edge(g, e);
            }
        }
        if !self.v_settled[v] && self.dirty[v] {
            // guarantees an entry for the refreshed tentative rank
            self.push(self.v_rank[v], v);
        }
        self.work.markings_e += 1;
        self.work.live_size_h_prime = g.live_size() as u64;
        Ok(())
    }

    fn retract_base(&mut self, g: &GameGraph, v: VIx) {
        if self.v_settled[v] {
            if self.v_rank[v] == 1 {
                self.support[v] -= 1;
                if self.support[v] == 0 {
                    self.invalidate(g, v);
                }
            }
        } else if self.tentative[v] == 1 {
            self.dirty[v] = true;
        }
    }

    /// Records that edge `e` fired, visiting its compressed interiors.
    /// Returns how many interiors were new.
    pub fn apply_interior_marking(&mut self, g: &mut GameGraph, e: EIx) -> usize {
        let lost: Vec<VIx> = g
            .staling_heads(e)
            .into_iter()
            .filter(|&(h, n)| g.is_marked(h) && g.has_base(h) && !g.has_trivial(h) && self.fresh_count(g, h) == n)
            .map(|(h, _)| h)
            .collect();
        for &h in &lost {
            self.retract_base(g, h);
        }
        let n = g.mark_interiors(e);
        for h in lost {
            if !self.v_settled[h] && self.dirty[h] {
                self.push(self.v_rank[h], h);
            }
        }
        n
    }

    fn fresh_count(&self, g: &GameGraph, h: VIx) -> u32 {
        g.live_out(h).iter().filter(|&&e| g.is_fresh(e)).count() as u32
    }

    /// Adds the initial vertex's edges when they come from a lazy provider.
    pub fn insert_initial_edges(&mut self, g: &mut GameGraph, generated: &[Edge]) -> Result<(), GraphError> {
        let v = g.initial();
        for e in generated {
            g.check_generated(v, e)?;
        }
        for e in generated {
            g.insert_live(e);
        }
        self.sync(g);
        if g.has_base(v) && !self.v_settled[v] && self.tentative[v] != 1 {
            self.tentative[v] = 1;
            self.push(1, v);
        }
        self.work.live_size_h_prime = g.live_size() as u64;
        Ok(())
    }

    pub fn is_settled(&self, v: VIx) -> bool {
        self.v_settled[v]
    }

    /// Exact rank when settled or known unreachable, else a lower bound.
    pub fn stored_vertex_rank(&self, v: VIx) -> Rank {
        if self.known_unreachable(v) {
            Rank::Unreachable
        } else {
            Rank::Finite(self.v_rank[v])
        }
    }

    /// Exact for settled edges; otherwise a lower bound built from the tail.
    pub fn stored_edge_rank(&self, g: &GameGraph, e: EIx) -> Rank {
        if g.is_fresh(e) {
            return Rank::ZERO;
        }
        if self.e_settled[e] {
            return Rank::Finite(self.e_rank[e]);
        }
        g.edge(e)
            .tail
            .iter()
            .map(|&t| self.stored_vertex_rank(t))
            .max()
            .unwrap_or(Rank::ZERO)
    }

    /// Exact rank of a settled live edge.
    pub fn settled_edge_rank(&self, e: EIx) -> Option<u64> {
        self.e_settled[e].then_some(self.e_rank[e])
    }

    /// Everything with exact rank up to this value is settled.
    pub fn settled_frontier(&self) -> Rank {
        match self.min_key() {
            Some(k) => Rank::Finite(k - 1),
            None => Rank::Unreachable,
        }
    }

    pub fn snapshot_work(&self) -> WorkStats {
        self.work
    }

    pub(crate) fn record_current_rank(&mut self, r: Rank) {
        if let Rank::Finite(n) = r {
            self.work.max_rank_r = self.work.max_rank_r.max(n);
        }
    }

    /// Settles everything and returns the full table.
    pub fn settle_all(&mut self, g: &GameGraph) -> RankSnapshot {
        self.advance(g, Rank::Unreachable);
        let vertex = (0..g.vertex_count()).map(|v| self.stored_vertex_rank(v)).collect();
        let edge = (0..g.edge_count())
            .map(|e| {
                if g.is_live(e) {
                    self.stored_edge_rank(g, e)
                } else {
                    Rank::Unreachable
                }
            })
            .collect();
        RankSnapshot { vertex, edge }
    }

    /// Incident edge refs of `v` that are settled at `rank`.
    pub fn edges_at_rank(&self, g: &GameGraph, v: VIx, rank: u64) -> Vec<EdgeRef> {
        let mut out = Vec::new();
        if g.has_trivial(v) && rank == 0 {
            out.push(EdgeRef::Trivial(v));
        }
        for &e in g.live_out(v) {
            let r = if g.is_fresh(e) { Some(0) } else { self.settled_edge_rank(e) };
            if r == Some(rank) {
                out.push(EdgeRef::Edge(e));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{parse_model, Edge, ModelDecl};
    use proptest::prelude::*;

    use Rank::{Finite, Unreachable};

    fn graph(text: &str) -> GameGraph {
        GameGraph::from_decl(&parse_model(text).unwrap()).unwrap()
    }

    fn vrank(g: &GameGraph, s: &RankSnapshot, id: &str) -> Rank {
        s.vertex[g.vertex(id).unwrap()]
    }

    fn erank(g: &GameGraph, s: &RankSnapshot, id: &str) -> Rank {
        s.edge[g.edge_by_id(id).unwrap()]
    }

    fn mark(t: &mut RankTable, g: &mut GameGraph, id: &str) {
        let v = g.vertex(id).unwrap();
        t.apply_marking(g, v, &[]).unwrap();
    }

    #[test]
    fn rank_order_and_algebra() {
        assert!(Finite(u64::MAX - 1) < Unreachable);
        assert_eq!(Unreachable.succ(), Unreachable);
        assert_eq!(Finite(3).max(Unreachable), Unreachable);
        assert_eq!(Finite(2).to_string(), "2");
        assert_eq!(Unreachable.to_string(), "unreachable");
    }

    #[test]
    fn oracle_on_fixtures() {
        let mut g = graph(G1);
        let s = oracle_ranks(&g, true);
        assert_eq!(vrank(&g, &s, "s0"), Finite(2));
        assert_eq!(vrank(&g, &s, "s1"), Finite(1));
        assert_eq!(vrank(&g, &s, "s2"), Finite(1));
        assert_eq!(erank(&g, &s, "a"), Finite(1));
        assert_eq!(erank(&g, &s, "b"), Finite(2));
        assert_eq!(erank(&g, &s, "c"), Finite(2));

        let s1 = g.vertex("s1").unwrap();
        g.mark(s1).unwrap();
        let s = oracle_ranks(&g, false);
        assert_eq!(vrank(&g, &s, "s2"), Finite(1));
        for v in ["s0", "s1"] {
            assert_eq!(vrank(&g, &s, v), Unreachable);
        }
        assert_eq!(erank(&g, &s, "a"), Unreachable);
        assert_eq!(erank(&g, &s, "b"), Unreachable);

        let g = graph(G3);
        let s = oracle_ranks(&g, false);
        assert_eq!(vrank(&g, &s, "s1"), Finite(1));
        assert_eq!(vrank(&g, &s, "s0"), Unreachable);
        assert_eq!(erank(&g, &s, "f"), Unreachable);
    }

    #[test]
    fn full_computation_matches_oracle() {
        for text in [G1, G2, G3] {
            let g = graph(text);
            let mut t = RankTable::compute(&g, Unreachable);
            assert_eq!(t.settle_all(&g), oracle_ranks(&g, false), "{text}");
            assert_eq!(t.settled_frontier(), Unreachable);
        }
    }

    #[test]
    fn threshold_stops_early() {
        let g = graph(G1);
        let t = RankTable::compute(&g, Finite(1));
        assert!(t.is_settled(g.vertex("s1").unwrap()));
        assert!(t.is_settled(g.vertex("s2").unwrap()));
        assert!(!t.is_settled(g.vertex("s0").unwrap()));
        assert_eq!(t.settled_frontier(), Finite(1));
        assert_eq!(t.stored_vertex_rank(g.vertex("s0").unwrap()), Finite(1));
    }

    #[test]
    fn no_base_case_means_unreachable() {
        let g = graph("initial a\nedge x a -> a\n");
        let mut t = RankTable::compute(&g, Finite(5));
        assert_eq!(t.ensure_settled(&g, 0), Unreachable);
        assert_eq!(t.stored_vertex_rank(0), Unreachable);
        assert_eq!(t.stored_edge_rank(&g, 0), Unreachable);
    }

    #[test]
    fn ensure_settled_on_fixtures() {
        let mut g = graph(G1);
        let mut t = RankTable::new(&g);
        let s0 = g.vertex("s0").unwrap();
        assert_eq!(t.ensure_settled(&g, s0), Finite(2));
        let before = t.snapshot_work();
        assert_eq!(t.ensure_settled(&g, s0), Finite(2));
        assert_eq!(t.snapshot_work(), before);

        mark(&mut t, &mut g, "s1");
        let s1 = g.vertex("s1").unwrap();
        assert_eq!(t.ensure_settled(&g, s1), Unreachable);
        assert_eq!(t.ensure_settled(&g, s0), Unreachable);
        assert_eq!(t.ensure_settled(&g, g.vertex("s2").unwrap()), Finite(1));
    }

    #[test]
    fn chain_marking() {
        let mut g = graph(G2);
        let mut t = RankTable::new(&g);
        assert_eq!(t.snapshot_work().live_size_h_prime, 2);
        assert_eq!(t.ensure_settled(&g, 0), Finite(2));
        mark(&mut t, &mut g, "s1");
        assert_eq!(t.ensure_settled(&g, g.vertex("s1").unwrap()), Finite(2));
        mark(&mut t, &mut g, "s2");
        assert_eq!(t.ensure_settled(&g, g.vertex("s2").unwrap()), Unreachable);
        assert_eq!(t.snapshot_work().markings_e, 2);
        assert_eq!(t.snapshot_work().live_size_h_prime, 4);
    }

    #[test]
    fn marking_a_sink() {
        let mut g = graph("initial s0\nedge a s0 -> s1\n");
        let mut t = RankTable::new(&g);
        mark(&mut t, &mut g, "s1");
        assert_eq!(t.ensure_settled(&g, 1), Unreachable);
    }

    #[test]
    fn marking_errors() {
        let mut g = graph(G2);
        let mut t = RankTable::new(&g);
        assert_eq!(
            t.apply_marking(&mut g, 0, &[]),
            Err(GraphError::AlreadyMarked("s0".into()))
        );
        let s1 = g.vertex("s1").unwrap();
        let bad = Edge::real("x", "s2", ["s0"]);
        assert!(matches!(
            t.apply_marking(&mut g, s1, &[bad]),
            Err(GraphError::ForeignEdge { .. })
        ));
        assert!(!g.is_marked(s1));
    }

    #[test]
    fn generated_edges_bring_new_vertices() {
        let mut g = GameGraph::singleton("0");
        let mut t = RankTable::new(&g);
        t.insert_initial_edges(&mut g, &[Edge::real("inc0", "0", ["1"])]).unwrap();
        assert_eq!(t.ensure_settled(&g, 0), Finite(2));
        let one = g.vertex("1").unwrap();
        t.apply_marking(&mut g, one, &[Edge::real("inc1", "1", ["2"])]).unwrap();
        assert_eq!(t.ensure_settled(&g, one), Finite(2));
        assert_eq!(t.ensure_settled(&g, 0), Finite(3));
    }

    /// Random marked-prefix scenario used by the property tests below.
    pub(crate) fn random_decl(n: usize, edges: &[(usize, Vec<usize>)]) -> ModelDecl {
        let mut d = ModelDecl::new("v0");
        for i in 0..n {
            d.vertices.insert(format!("v{i}"));
        }
        for (i, (h, tail)) in edges.iter().enumerate() {
            let tail: std::collections::BTreeSet<String> =
                tail.iter().map(|t| format!("v{}", t % n)).collect();
            d.edges.push(Edge::real(&format!("e{i:02}"), &format!("v{}", h % n), tail));
        }
        d.sort_edges();
        d
    }

    type Scenario = (usize, Vec<(usize, Vec<usize>)>, Vec<usize>);

    fn scenario() -> impl Strategy<Value = Scenario> {
        (1usize..9).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(
                    (0..n, proptest::collection::vec(0..n, 1..4)),
                    0..14,
                ),
                Just((1..n).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn lazy_table_tracks_oracle((n, edges, order) in scenario(), k in 0usize..9) {
            let decl = random_decl(n, &edges);
            let mut g = GameGraph::from_decl(&decl).unwrap();
            let mut t = RankTable::new(&g);
            let mut history: Vec<Vec<Rank>> = Vec::new();
            for step in 0..=order.len() {
                let oracle = oracle_ranks(&g, false);
                // lower bounds hold before anything is forced
                for v in 0..n {
                    prop_assert!(t.stored_vertex_rank(v) <= oracle.vertex[v]);
                }
                let probe = (k + step) % n;
                prop_assert_eq!(t.ensure_settled(&g, probe), oracle.vertex[probe]);
                let exact: Vec<Rank> = (0..n).map(|v| t.ensure_settled(&g, v)).collect();
                prop_assert_eq!(&exact, &oracle.vertex);
                for e in 0..g.edge_count() {
                    if g.is_live(e) {
                        prop_assert_eq!(t.stored_edge_rank(&g, e), oracle.edge[e]);
                    }
                }
                if let Some(prev) = history.last() {
                    for v in 0..n {
                        prop_assert!(prev[v] <= exact[v], "rank decreased");
                    }
                }
                history.push(exact);
                if step < order.len() {
                    let v = order[step];
                    t.apply_marking(&mut g, v, &[]).unwrap();
                }
            }
        }

        #[test]
        fn dead_edges_do_not_move_vertex_ranks((n, edges, order) in scenario(), marks in 0usize..9) {
            let decl = random_decl(n, &edges);
            let mut g = GameGraph::from_decl(&decl).unwrap();
            for &v in order.iter().take(marks) {
                g.mark(v).unwrap();
            }
            prop_assert_eq!(oracle_ranks(&g, true).vertex, oracle_ranks(&g, false).vertex);
        }

        #[test]
        fn counters_never_decrease((n, edges, order) in scenario()) {
            let decl = random_decl(n, &edges);
            let mut g = GameGraph::from_decl(&decl).unwrap();
            let mut t = RankTable::new(&g);
            let mut prev = t.snapshot_work();
            for &v in &order {
                t.ensure_settled(&g, 0);
                t.apply_marking(&mut g, v, &[]).unwrap();
                let now = t.snapshot_work();
                prop_assert!(now.relaxations >= prev.relaxations);
                prop_assert!(now.queue_ops >= prev.queue_ops);
                prop_assert!(now.live_size_h_prime >= prev.live_size_h_prime);
                prop_assert!(now.markings_e > prev.markings_e);
                prev = now;
            }
        }
    }
}
