//! The game graph: a model's hypergraph plus one trivial marker edge per
//! unmarked vertex. Real edges whose head is still unmarked are kept aside
//! ("dead") and promoted when their head is first visited.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::model::{is_virtual_vertex, validate, Edge, EdgeKind, ModelDecl, ModelError};

/// Dense vertex index.
pub type VIx = usize;
/// Dense edge index (real and virtual edges only; trivial edges are implicit).
pub type EIx = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeData {
    pub id: String,
    pub head: VIx,
    pub tail: Vec<VIx>,
    pub kind: EdgeKind,
    pub label: String,
    pub interior: Vec<String>,
}

/// An edge as seen by the game: either a real/virtual edge or the trivial
/// marker edge of an unmarked vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeRef {
    Trivial(VIx),
    Edge(EIx),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("vertex `{0}` is already marked")]
    AlreadyMarked(String),
    #[error("edge `{edge}` has head `{head}`, expected `{expected}`")]
    ForeignEdge {
        edge: String,
        head: String,
        expected: String,
    },
    #[error("edge `{0}` already exists")]
    DuplicateEdge(String),
    #[error("edge `{0}` must be real or virtual with a nonempty tail")]
    BadEdge(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameGraph {
    name: Option<String>,
    vertex_ids: Vec<String>,
    vertex_ix: HashMap<String, VIx>,
    initial: VIx,
    marked: Vec<bool>,
    marked_count: usize,
    edges: Vec<EdgeData>,
    edge_ix: HashMap<String, EIx>,
    live: Vec<bool>,
    out_live: Vec<Vec<EIx>>,
    dead: Vec<Vec<EIx>>,
    uses: Vec<Vec<EIx>>,
    live_size: usize,
    /// Compressed interior states already visited.
    interior_done: HashSet<String>,
    interior_edges: HashMap<String, Vec<EIx>>,
    /// Edges with an interior state not yet visited.
    fresh: Vec<bool>,
    /// Live fresh edges per head.
    fresh_out: Vec<u32>,
}

impl GameGraph {
    /// A graph holding only the initial vertex; edges arrive through
    /// [`GameGraph::insert_live`] (lazy state spaces).
    pub fn singleton(initial: &str) -> Self {
        let mut g = GameGraph {
            name: None,
            vertex_ids: Vec::new(),
            vertex_ix: HashMap::new(),
            initial: 0,
            marked: Vec::new(),
            marked_count: 0,
            edges: Vec::new(),
            edge_ix: HashMap::new(),
            live: Vec::new(),
            out_live: Vec::new(),
            dead: Vec::new(),
            uses: Vec::new(),
            live_size: 0,
            interior_done: HashSet::new(),
            interior_edges: HashMap::new(),
            fresh: Vec::new(),
            fresh_out: Vec::new(),
        };
        g.ensure_vertex(initial);
        g.marked[0] = true;
        g.marked_count = 1;
        g
    }

    /// Builds the game graph with the initial vertex marked; only edges at
    /// the initial vertex start live.
    pub fn from_decl(decl: &ModelDecl) -> Result<Self, ModelError> {
        let violations = validate(decl);
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        let mut g = GameGraph::singleton(&decl.initial);
        g.name = decl.name.clone();
        // sorted id order for every vertex except the initial one, which is 0
        for v in &decl.vertices {
            g.ensure_vertex(v);
        }
        let mut edges: Vec<&Edge> = decl.edges.iter().collect();
        edges.sort_by(|a, b| a.id.cmp(&b.id));
        for e in edges {
            let head = g.vertex_ix[&e.head];
            let ix = g.push_edge(e);
            if head == g.initial {
                g.make_live(ix);
            } else {
                g.dead[head].push(ix);
            }
        }
        Ok(g)
    }

    fn push_edge(&mut self, e: &Edge) -> EIx {
        let ix = self.edges.len();
        let head = self.ensure_vertex(&e.head).0;
        let tail = e.tail.iter().map(|t| self.ensure_vertex(t).0).collect();
        self.edges.push(EdgeData {
            id: e.id.clone(),
            head,
            tail,
            kind: e.kind,
            label: e.label.clone(),
            interior: e.compressed_interior.clone(),
        });
        self.edge_ix.insert(e.id.clone(), ix);
        self.live.push(false);
        for i in &e.compressed_interior {
            self.interior_edges.entry(i.clone()).or_default().push(ix);
        }
        let fresh = e.compressed_interior.iter().any(|i| !self.interior_done.contains(i));
        self.fresh.push(fresh);
        ix
    }

    fn make_live(&mut self, ix: EIx) {
        debug_assert!(!self.live[ix]);
        self.live[ix] = true;
        let edge = &self.edges[ix];
        let head = edge.head;
        if self.fresh[ix] {
            self.fresh_out[head] += 1;
        }
        self.live_size += 1 + edge.tail.len();
        for &t in &edge.tail {
            self.uses[t].push(ix);
        }
        let edges = &self.edges;
        let key = &edges[ix].id;
        let pos = self.out_live[head]
            .binary_search_by(|&o| edges[o].id.cmp(key))
            .unwrap_err();
        self.out_live[head].insert(pos, ix);
    }

    /// Returns the index of `id`, adding it as a fresh unmarked vertex when
    /// unknown. The flag is true for new vertices.
    pub fn ensure_vertex(&mut self, id: &str) -> (VIx, bool) {
        if let Some(&ix) = self.vertex_ix.get(id) {
            return (ix, false);
        }
        let ix = self.vertex_ids.len();
        self.vertex_ids.push(id.to_string());
        self.vertex_ix.insert(id.to_string(), ix);
        self.marked.push(false);
        self.out_live.push(Vec::new());
        self.dead.push(Vec::new());
        self.uses.push(Vec::new());
        self.fresh_out.push(0);
        (ix, true)
    }

    /// Marks `v` and promotes its dead edges, returning them.
    pub(crate) fn mark(&mut self, v: VIx) -> Result<Vec<EIx>, GraphError> {
        if self.marked[v] {
            return Err(GraphError::AlreadyMarked(self.vertex_ids[v].clone()));
        }
        self.marked[v] = true;
        self.marked_count += 1;
        let promoted = std::mem::take(&mut self.dead[v]);
        for &e in &promoted {
            self.make_live(e);
        }
        Ok(promoted)
    }

    /// Checks that `e` may be inserted as a live edge at marked vertex `v`.
    pub(crate) fn check_generated(&self, v: VIx, e: &Edge) -> Result<(), GraphError> {
        if e.head != self.vertex_ids[v] {
            return Err(GraphError::ForeignEdge {
                edge: e.id.clone(),
                head: e.head.clone(),
                expected: self.vertex_ids[v].clone(),
            });
        }
        if e.kind == EdgeKind::Trivial || e.tail.is_empty() || e.tail.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(GraphError::BadEdge(e.id.clone()));
        }
        if self.edge_ix.contains_key(&e.id) {
            return Err(GraphError::DuplicateEdge(e.id.clone()));
        }
        Ok(())
    }

    /// Inserts a generated edge live; unknown tail vertices join the graph
    /// unmarked. Call [`GameGraph::check_generated`] first.
    pub(crate) fn insert_live(&mut self, e: &Edge) -> EIx {
        let ix = self.push_edge(e);
        self.make_live(ix);
        ix
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn initial(&self) -> VIx {
        self.initial
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_id(&self, v: VIx) -> &str {
        &self.vertex_ids[v]
    }

    pub fn vertex(&self, id: &str) -> Result<VIx, GraphError> {
        self.vertex_ix
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownVertex(id.to_string()))
    }

    pub fn edge_by_id(&self, id: &str) -> Result<EIx, GraphError> {
        self.edge_ix
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownEdge(id.to_string()))
    }

    pub fn edge(&self, e: EIx) -> &EdgeData {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[EdgeData] {
        &self.edges
    }

    pub fn is_marked(&self, v: VIx) -> bool {
        self.marked[v]
    }

    pub fn marked_count(&self) -> usize {
        self.marked_count
    }

    pub fn is_virtual(&self, v: VIx) -> bool {
        is_virtual_vertex(&self.vertex_ids[v])
    }

    /// Non-initial unmarked vertices carry a trivial edge.
    pub fn has_trivial(&self, v: VIx) -> bool {
        !self.marked[v]
    }

    /// True when `v` has rank 1 outright: it is unmarked, or one of its live
    /// edges passes through an unvisited compressed interior.
    pub fn has_base(&self, v: VIx) -> bool {
        !self.marked[v] || self.fresh_out[v] > 0
    }

    /// The edge still passes through an unvisited compressed interior.
    pub fn is_fresh(&self, e: EIx) -> bool {
        self.fresh[e]
    }

    pub fn interior_marked(&self, id: &str) -> bool {
        self.interior_done.contains(id)
    }

    pub fn interior_marked_count(&self) -> usize {
        self.interior_done.len()
    }

    /// Heads of live edges that stop being fresh once `e` fires, paired with
    /// how many of their fresh edges go stale.
    pub(crate) fn staling_heads(&self, e: EIx) -> Vec<(VIx, u32)> {
        let mut stale: Vec<EIx> = self.edges[e]
            .interior
            .iter()
            .filter(|i| !self.interior_done.contains(*i))
            .flat_map(|i| self.interior_edges[i].iter().copied())
            .filter(|&o| self.fresh[o] && self.live[o])
            .collect();
        stale.sort_unstable();
        stale.dedup();
        let mut heads: Vec<(VIx, u32)> = Vec::new();
        for o in stale {
            let h = self.edges[o].head;
            match heads.iter_mut().find(|(x, _)| *x == h) {
                Some((_, c)) => *c += 1,
                None => heads.push((h, 1)),
            }
        }
        heads
    }

    /// Marks the interiors of `e`, returning how many were new.
    pub(crate) fn mark_interiors(&mut self, e: EIx) -> usize {
        let new: Vec<String> = self.edges[e]
            .interior
            .iter()
            .filter(|i| !self.interior_done.contains(*i))
            .cloned()
            .collect();
        for i in &new {
            self.interior_done.insert(i.clone());
        }
        for i in &new {
            for &o in &self.interior_edges[i] {
                if self.fresh[o] && self.edges[o].interior.iter().all(|x| self.interior_done.contains(x)) {
                    self.fresh[o] = false;
                    if self.live[o] {
                        self.fresh_out[self.edges[o].head] -= 1;
                    }
                }
            }
        }
        new.len()
    }

    /// Whether `v` keeps a base once marked, given edges about to arrive.
    pub(crate) fn base_after_marking(&self, v: VIx, generated: &[Edge]) -> bool {
        self.fresh_out[v] > 0
            || self.dead[v].iter().any(|&e| self.fresh[e])
            || generated
                .iter()
                .any(|e| e.compressed_interior.iter().any(|i| !self.interior_done.contains(i)))
    }

    pub fn is_live(&self, e: EIx) -> bool {
        self.live[e]
    }

    /// Live edges with head `v`, in edge-id order.
    pub fn live_out(&self, v: VIx) -> &[EIx] {
        &self.out_live[v]
    }

    pub fn dead_out(&self, v: VIx) -> &[EIx] {
        &self.dead[v]
    }

    /// Live edges whose tail contains `v`.
    pub fn live_uses(&self, v: VIx) -> &[EIx] {
        &self.uses[v]
    }

    /// Total size (head plus tail entries) of the live edges.
    pub fn live_size(&self) -> usize {
        self.live_size
    }

    pub fn edge_ref_id(&self, r: EdgeRef) -> String {
        match r {
            EdgeRef::Trivial(v) => format!("trivial({})", self.vertex_ids[v]),
            EdgeRef::Edge(e) => self.edges[e].id.clone(),
        }
    }

    /// Edges incident to (headed at) `v`: the trivial edge first if present,
    /// then live edges and, on request, dead ones, each group in id order.
    pub fn incident_edges(&self, v: &str, include_dead: bool) -> Result<Vec<EdgeRef>, GraphError> {
        let v = self.vertex(v)?;
        let mut out = Vec::new();
        if self.has_trivial(v) {
            out.push(EdgeRef::Trivial(v));
        }
        out.extend(self.out_live[v].iter().map(|&e| EdgeRef::Edge(e)));
        if include_dead {
            out.extend(self.dead[v].iter().map(|&e| EdgeRef::Edge(e)));
        }
        Ok(out)
    }

    /// Vertex indices sorted by id.
    pub fn vertices_by_id(&self) -> Vec<VIx> {
        let mut vs: Vec<VIx> = (0..self.vertex_count()).collect();
        vs.sort_by(|&a, &b| self.vertex_ids[a].cmp(&self.vertex_ids[b]));
        vs
    }

    pub fn edges_by_id(&self) -> Vec<EIx> {
        let mut es: Vec<EIx> = (0..self.edge_count()).collect();
        es.sort_by(|&a, &b| self.edges[a].id.cmp(&self.edges[b].id));
        es
    }
}

impl fmt::Display for GameGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in self.vertices_by_id() {
            let state = if self.marked[v] { "marked" } else { "unmarked" };
            writeln!(f, "vertex {} {state}", self.vertex_ids[v])?;
        }
        for e in self.edges_by_id() {
            let d = &self.edges[e];
            let state = if self.live[e] { "live" } else { "dead" };
            let tail: Vec<&str> = d.tail.iter().map(|&t| self.vertex_ids[t].as_str()).collect();
            writeln!(
                f,
                "edge {} {} -> {} {state}",
                d.id,
                self.vertex_ids[d.head],
                tail.join(" ")
            )?;
        }
        Ok(())
    }
}
