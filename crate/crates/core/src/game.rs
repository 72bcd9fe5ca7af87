//! The testing game: the tester plays a minimal-rank edge at the current
//! state, the system answers with a tail vertex, and first visits mark
//! states. A session ends when the current state becomes unreachable, since
//! from then on the system can dodge every unvisited state.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::adversary::{Adversary, AdversaryError};
use crate::graph::{EIx, EdgeRef, GameGraph, GraphError, VIx};
use crate::model::{is_virtual_vertex, Edge, ModelDecl, ModelError};
use crate::provider::{Provider, ProviderError};
use crate::rank::{oracle_ranks, Rank, RankSnapshot, RankTable, WorkStats};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("the session is terminal: no strategy can force new coverage")]
    Terminal,
    #[error("edge `{edge}` is not a live edge at current state `{current}`")]
    IllegalEdge { edge: String, current: String },
    #[error("`{vertex}` is not in the tail of edge `{edge}`")]
    NotInTail { edge: String, vertex: String },
    #[error("vertex `{0}` is not marked")]
    NotMarked(String),
    #[error("provider expanded `{0}` twice")]
    DoubleExpansion(String),
    #[error("model has {0} vertices; exhaustive search is limited to {1}")]
    TooLarge(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Unreachable,
    AllMarked,
    MoveCap,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Unreachable => "unreachable",
            Termination::AllMarked => "all_marked",
            Termination::MoveCap => "move_cap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MoveRecord {
    pub index: u64,
    pub from: String,
    pub edge: String,
    pub response: String,
    pub newly_marked: bool,
    pub rank_before: Rank,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub moves: Vec<MoveRecord>,
}

impl Transcript {
    /// Tab-separated, one move per line:
    /// `index from edge response newly_marked rank_before`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for m in &self.moves {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                m.index, m.from, m.edge, m.response, m.newly_marked, m.rank_before
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionStats {
    /// Known states, including chain-compressed interiors. Grows during lazy
    /// sessions.
    pub states_total: usize,
    pub states_marked_e: usize,
    pub virtual_total: usize,
    pub virtual_marked: usize,
    pub moves: u64,
    pub max_rank_r: Rank,
    pub live_size_h_prime: usize,
    pub work: WorkStats,
    pub terminated: Option<Termination>,
    pub lazy: bool,
}

impl SessionStats {
    pub fn real_total(&self) -> usize {
        self.states_total - self.virtual_total
    }

    pub fn real_marked(&self) -> usize {
        self.states_marked_e - self.virtual_marked
    }

    /// The stats file object.
    pub fn to_json(&self, seed: Option<u64>) -> serde_json::Value {
        serde_json::json!({
            "states_total": self.states_total,
            "states_marked": self.states_marked_e,
            "real_states_total": self.real_total(),
            "real_states_marked": self.real_marked(),
            "virtual_states_total": self.virtual_total,
            "virtual_states_marked": self.virtual_marked,
            "moves": self.moves,
            "max_rank_R": self.max_rank_r,
            "live_size_H_prime": self.live_size_h_prime,
            "relaxations": self.work.relaxations,
            "queue_ops": self.work.queue_ops,
            "terminated": self.terminated,
            "seed": seed,
            "lazy": self.lazy,
        })
    }
}

/// Upper bound on moves before the next marking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Moves {
    Finite(u64),
    Unbounded,
}

impl fmt::Display for Moves {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Moves::Finite(n) => write!(f, "{n}"),
            Moves::Unbounded => f.write_str("unbounded"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_moves: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_moves: 1_000_000 }
    }
}

enum Expansion {
    Eager,
    Lazy {
        provider: Box<dyn Provider + Send>,
        expanded: HashSet<String>,
    },
}

impl Expansion {
    fn expand(&mut self, v: &str) -> Result<Vec<Edge>, SessionError> {
        match self {
            Expansion::Eager => Ok(Vec::new()),
            Expansion::Lazy { provider, expanded } => {
                if !expanded.insert(v.to_string()) {
                    return Err(SessionError::DoubleExpansion(v.to_string()));
                }
                let mut edges = provider.expand(v)?;
                edges.sort_by(|a, b| a.id.cmp(&b.id));
                Ok(edges)
            }
        }
    }
}

/// A full position of the testing game.
pub struct GameState {
    graph: GameGraph,
    ranks: RankTable,
    current: VIx,
    moves: u64,
    interior_total: BTreeSet<String>,
    expansion: Expansion,
}

impl fmt::Debug for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameState")
            .field("current", &self.graph.vertex_id(self.current))
            .field("moves", &self.moves)
            .field("coverage", &self.coverage())
            .finish_non_exhaustive()
    }
}

impl GameState {
    /// Eager session on a fully materialized model; edges of unmarked
    /// states stay deferred until those states are visited.
    pub fn start(decl: &ModelDecl) -> Result<Self, SessionError> {
        let graph = GameGraph::from_decl(decl)?;
        let ranks = RankTable::new(&graph);
        let mut gs = GameState {
            current: graph.initial(),
            graph,
            ranks,
            moves: 0,
            interior_total: decl.interior_vertices(),
            expansion: Expansion::Eager,
        };
        gs.observe_current();
        Ok(gs)
    }

    /// Lazy session: edges appear only when their head is first visited.
    pub fn start_lazy(provider: Box<dyn Provider + Send>) -> Result<Self, SessionError> {
        let initial = provider.initial();
        let mut graph = GameGraph::singleton(&initial);
        let mut ranks = RankTable::new(&graph);
        let mut expansion = Expansion::Lazy {
            provider,
            expanded: HashSet::new(),
        };
        let edges = expansion.expand(&initial)?;
        ranks.insert_initial_edges(&mut graph, &edges)?;
        let mut gs = GameState {
            current: graph.initial(),
            graph,
            ranks,
            moves: 0,
            interior_total: interiors(&edges),
            expansion,
        };
        gs.observe_current();
        Ok(gs)
    }

    /// An eager session positioned with `marked` already visited (in the
    /// given order) and the system at `current`.
    pub fn at_position(decl: &ModelDecl, marked: &[&str], current: &str) -> Result<Self, SessionError> {
        let mut gs = GameState::start(decl)?;
        for id in marked {
            let v = gs.graph.vertex(id)?;
            if !gs.graph.is_marked(v) {
                gs.mark(v)?;
            }
        }
        let c = gs.graph.vertex(current)?;
        if !gs.graph.is_marked(c) {
            return Err(SessionError::NotMarked(current.to_string()));
        }
        gs.current = c;
        gs.observe_current();
        Ok(gs)
    }

    fn observe_current(&mut self) -> Rank {
        let r = self.ranks.ensure_settled(&self.graph, self.current);
        self.ranks.record_current_rank(r);
        r
    }

    fn mark(&mut self, v: VIx) -> Result<(), SessionError> {
        let edges = self.expansion.expand(self.graph.vertex_id(v))?;
        self.ranks.apply_marking(&mut self.graph, v, &edges)?;
        self.interior_total.extend(interiors(&edges));
        Ok(())
    }

    pub fn graph(&self) -> &GameGraph {
        &self.graph
    }

    pub fn ranks(&self) -> &RankTable {
        &self.ranks
    }

    pub fn current(&self) -> VIx {
        self.current
    }

    pub fn current_id(&self) -> &str {
        self.graph.vertex_id(self.current)
    }

    pub fn moves(&self) -> u64 {
        self.moves
    }

    pub fn is_lazy(&self) -> bool {
        matches!(self.expansion, Expansion::Lazy { .. })
    }

    /// Number of marked states, counting compressed interiors.
    pub fn coverage(&self) -> usize {
        self.graph.marked_count() + self.graph.interior_marked_count()
    }

    pub fn states_total(&self) -> usize {
        self.graph.vertex_count() + self.interior_total.len()
    }

    pub fn all_marked(&self) -> bool {
        self.coverage() == self.states_total()
    }

    pub fn is_marked(&self, v: VIx) -> bool {
        self.graph.is_marked(v)
    }

    pub fn interior_marked(&self, id: &str) -> bool {
        self.graph.interior_marked(id)
    }

    /// Exact rank of `v` under the current markings.
    pub fn rank_of(&mut self, v: VIx) -> Rank {
        self.ranks.ensure_settled(&self.graph, v)
    }

    pub fn current_rank(&mut self) -> Rank {
        self.rank_of(self.current)
    }

    pub fn is_terminal(&mut self) -> bool {
        !self.current_rank().is_reachable()
    }

    /// Ranks from the naive fixpoint, independent of the lazy table.
    pub fn oracle(&self) -> RankSnapshot {
        oracle_ranks(&self.graph, false)
    }

    /// The min-rank choice at any marked vertex `v`: a live edge ranked one
    /// below `v`, smallest id first.
    pub fn choose_at(&mut self, v: VIx) -> Result<EIx, SessionError> {
        let Rank::Finite(r) = self.rank_of(v) else {
            return Err(SessionError::Terminal);
        };
        debug_assert!(self.graph.is_marked(v));
        let options = self.ranks.edges_at_rank(&self.graph, v, r - 1);
        // live_out is in id order, so the first real edge wins ties
        options
            .into_iter()
            .find_map(|e| match e {
                EdgeRef::Edge(e) => Some(e),
                EdgeRef::Trivial(_) => None,
            })
            .ok_or(SessionError::Terminal)
    }

    pub fn tester_choose(&mut self) -> Result<EIx, SessionError> {
        self.choose_at(self.current)
    }

    fn check_move(&self, e: EIx, v: VIx) -> Result<(), SessionError> {
        let edge = self.graph.edge(e);
        if !self.graph.is_live(e) || edge.head != self.current {
            return Err(SessionError::IllegalEdge {
                edge: edge.id.clone(),
                current: self.current_id().to_string(),
            });
        }
        if !edge.tail.contains(&v) {
            return Err(SessionError::NotInTail {
                edge: edge.id.clone(),
                vertex: self.graph.vertex_id(v).to_string(),
            });
        }
        Ok(())
    }

    /// Plays edge `e` with system response `v`. Any live edge at the current
    /// state is accepted, not only the min-rank one.
    pub fn apply_response(&mut self, e: EIx, v: VIx) -> Result<MoveRecord, SessionError> {
        self.check_move(e, v)?;
        let rank_before = self.current_rank();
        let from = self.current_id().to_string();
        let newly_marked = !self.graph.is_marked(v);
        if newly_marked {
            self.mark(v)?;
        }
        self.ranks.apply_interior_marking(&mut self.graph, e);
        self.current = v;
        self.moves += 1;
        self.observe_current();
        Ok(MoveRecord {
            index: self.moves,
            from,
            edge: self.graph.edge(e).id.clone(),
            response: self.graph.vertex_id(v).to_string(),
            newly_marked,
            rank_before,
        })
    }

    /// Why the session would stop here, if it would.
    pub fn termination(&mut self, limits: &Limits) -> Option<Termination> {
        if self.all_marked() {
            Some(Termination::AllMarked)
        } else if self.is_terminal() {
            Some(Termination::Unreachable)
        } else if self.moves >= limits.max_moves {
            Some(Termination::MoveCap)
        } else {
            None
        }
    }

    pub fn stats(&mut self, terminated: Option<Termination>) -> SessionStats {
        let virtual_total = (0..self.graph.vertex_count())
            .filter(|&v| self.graph.is_virtual(v))
            .count();
        let virtual_marked = (0..self.graph.vertex_count())
            .filter(|&v| self.graph.is_virtual(v) && self.graph.is_marked(v))
            .count();
        // compressed interiors can be virtual too
        let virtual_interiors = self.interior_total.iter().filter(|i| is_virtual_vertex(i));
        let virtual_total = virtual_total + virtual_interiors.clone().count();
        let virtual_marked = virtual_marked + virtual_interiors.filter(|i| self.graph.interior_marked(i)).count();
        let work = self.ranks.snapshot_work();
        SessionStats {
            states_total: self.states_total(),
            states_marked_e: self.coverage(),
            virtual_total,
            virtual_marked,
            moves: self.moves,
            max_rank_r: Rank::Finite(work.max_rank_r),
            live_size_h_prime: self.graph.live_size(),
            work,
            terminated,
            lazy: self.is_lazy(),
        }
    }

    /// Plays until the session stops.
    pub fn run(
        &mut self,
        adversary: &mut dyn Adversary,
        limits: &Limits,
    ) -> Result<(Transcript, SessionStats), SessionError> {
        let mut transcript = Transcript::default();
        let reason = loop {
            if let Some(reason) = self.termination(limits) {
                break reason;
            }
            let e = self.tester_choose()?;
            let v = adversary.respond(self, e)?;
            transcript.moves.push(self.apply_response(e, v)?);
        };
        Ok((transcript, self.stats(Some(reason))))
    }
}

fn interiors(edges: &[Edge]) -> BTreeSet<String> {
    edges
        .iter()
        .flat_map(|e| e.compressed_interior.iter().cloned())
        .collect()
}

/// Starts an eager session on `decl` and plays it out.
pub fn run_session(
    decl: &ModelDecl,
    adversary: &mut dyn Adversary,
    limits: &Limits,
) -> Result<(Transcript, SessionStats), SessionError> {
    GameState::start(decl)?.run(adversary, limits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{Avoider, RandomFair, Scripted};
    use crate::model::fixtures::*;
    use crate::model::parse_model;

    fn decl(text: &str) -> ModelDecl {
        parse_model(text).unwrap()
    }

    fn play(gs: &mut GameState, edge: &str, to: &str) -> MoveRecord {
        let e = gs.graph().edge_by_id(edge).unwrap();
        let v = gs.graph().vertex(to).unwrap();
        gs.apply_response(e, v).unwrap()
    }

    #[test]
    fn start_positions() {
        let mut gs = GameState::start(&decl(G1)).unwrap();
        assert_eq!(gs.current_id(), "s0");
        assert_eq!(gs.coverage(), 1);
        assert_eq!(gs.current_rank(), Rank::Finite(2));
        assert!(!gs.is_terminal());

        let mut gs = GameState::start(&decl("initial s0\n")).unwrap();
        assert!(gs.is_terminal());
        assert_eq!(gs.coverage(), 1);

        let mut gs = GameState::start(&decl(G3)).unwrap();
        assert!(gs.is_terminal());
        assert_eq!(gs.coverage(), 1);
        assert!(matches!(gs.tester_choose(), Err(SessionError::Terminal)));
    }

    #[test]
    fn tester_picks_min_rank_edge() {
        let mut gs = GameState::start(&decl(G1)).unwrap();
        let e = gs.tester_choose().unwrap();
        assert_eq!(gs.graph().edge(e).id, "a");

        let mut gs = GameState::start(&decl(G2)).unwrap();
        play(&mut gs, "e1", "s1");
        let e = gs.tester_choose().unwrap();
        assert_eq!(gs.graph().edge(e).id, "e2");
    }

    #[test]
    fn tester_ties_break_by_edge_id() {
        // edges from s0 of rank 3 (via the long way), 1 and 1
        let text = "initial s0\nedge z s0 -> s1\nedge y s0 -> s2\nedge x s0 -> s3\n\
                    edge w s3 -> s4\nedge v s4 -> s5\n";
        let mut gs = GameState::at_position(&decl(text), &["s3", "s4"], "s0").unwrap();
        let x = gs.graph().edge_by_id("x").unwrap();
        assert_eq!(gs.ranks().settled_edge_rank(x), None);
        let e = gs.tester_choose().unwrap();
        assert_eq!(gs.graph().edge(e).id, "y");
    }

    #[test]
    fn diamond_loop_blocks_after_s1() {
        let mut gs = GameState::start(&decl(G1)).unwrap();
        let m = play(&mut gs, "a", "s1");
        assert!(m.newly_marked);
        assert_eq!(m.rank_before, Rank::Finite(2));
        assert_eq!(gs.coverage(), 2);
        assert_eq!(gs.current_id(), "s1");
        assert!(gs.is_terminal());
    }

    #[test]
    fn chain_is_covered_in_two_moves() {
        let mut gs = GameState::start(&decl(G2)).unwrap();
        play(&mut gs, "e1", "s1");
        play(&mut gs, "e2", "s2");
        assert_eq!(gs.coverage(), 3);
        assert!(gs.is_terminal());
        assert_eq!(gs.termination(&Limits::default()), Some(Termination::AllMarked));
        assert_eq!(gs.stats(None).work.markings_e, 2);
    }

    #[test]
    fn revisit_lowers_rank() {
        // s0 -a-> s1 -b-> s0 with s0 -c-> s2 unexplored
        let text = "initial s0\nedge a s0 -> s1\nedge b s1 -> s0\nedge c s1 -> s2\n";
        let mut gs = GameState::at_position(&decl(text), &["s1"], "s0").unwrap();
        assert_eq!(gs.current_rank(), Rank::Finite(3));
        let before = gs.coverage();
        let m = play(&mut gs, "a", "s1");
        assert!(!m.newly_marked);
        assert_eq!(gs.coverage(), before);
        assert_eq!(gs.current_rank(), Rank::Finite(2));
    }

    #[test]
    fn illegal_moves() {
        let mut gs = GameState::start(&decl(G1)).unwrap();
        let b = gs.graph().edge_by_id("b").unwrap();
        let a = gs.graph().edge_by_id("a").unwrap();
        let s0 = gs.graph().vertex("s0").unwrap();
        assert!(matches!(
            gs.apply_response(b, s0),
            Err(SessionError::IllegalEdge { .. })
        ));
        assert!(matches!(
            gs.apply_response(a, s0),
            Err(SessionError::NotInTail { .. })
        ));
    }

    #[test]
    fn sessions_on_fixtures() {
        let (t, s) = run_session(&decl(G1), &mut Avoider, &Limits::default()).unwrap();
        assert_eq!(s.terminated, Some(Termination::Unreachable));
        assert_eq!((s.states_marked_e, s.states_total), (2, 3));
        assert_eq!(t.moves.len(), 1);

        for seed in 0..5 {
            let (t, s) =
                run_session(&decl(G2), &mut RandomFair::new(seed), &Limits::default()).unwrap();
            assert_eq!(s.terminated, Some(Termination::AllMarked));
            assert_eq!(s.states_marked_e, 3);
            assert_eq!(t.moves.len(), 2);
        }

        // once s2 is visited the system can bounce between s0 and s2 forever
        let (t, s) = run_session(
            &decl(G1),
            &mut Scripted::new(["s2"]),
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(t.moves.len(), 1);
        assert_eq!(s.terminated, Some(Termination::Unreachable));
        assert_eq!(s.states_marked_e, 2);
    }

    #[test]
    fn move_cap() {
        let text = "initial s0\nedge a s0 -> s1\nedge b s1 -> s2\nedge c s2 -> s3\n";
        let (t, s) = run_session(&decl(text), &mut Avoider, &Limits { max_moves: 2 }).unwrap();
        assert_eq!(t.moves.len(), 2);
        assert_eq!(s.terminated, Some(Termination::MoveCap));
    }

    #[test]
    fn trace_and_stats_format() {
        let (t, s) = run_session(&decl(G2), &mut Avoider, &Limits::default()).unwrap();
        assert_eq!(t.to_tsv(), "1\ts0\te1\ts1\ttrue\t2\n2\ts1\te2\ts2\ttrue\t2\n");
        let json = s.to_json(Some(7));
        for key in [
            "states_total",
            "states_marked",
            "moves",
            "max_rank_R",
            "live_size_H_prime",
            "relaxations",
            "queue_ops",
            "terminated",
            "seed",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["terminated"], "all_marked");
        assert_eq!(json["max_rank_R"], 2);
        assert_eq!(json["seed"], 7);
    }
}
