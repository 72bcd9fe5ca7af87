//! Coverage-driven conformance testing against nondeterministic models.
//!
//! A model is a directed hypergraph: each edge is a stimulus with one head
//! (where it can be applied) and a tail (the states the system may move to).
//! The tester plays an edge of minimal rank, the system picks a tail vertex,
//! and the session stops once the system can avoid visiting anything new.

pub mod adversary;
pub mod game;
pub mod graph;
pub mod minimax;
pub mod model;
pub mod provider;
pub mod rank;
pub mod transform;

pub use adversary::{Adversary, AdversaryError, Avoider, RandomFair, Scripted, Subset};
pub use game::{run_session, GameState, Limits, Moves, SessionError, SessionStats, Termination, Transcript};
pub use graph::{EdgeRef, GameGraph, GraphError};
pub use minimax::{minimax_moves_to_mark, strategy_worst_case};
pub use model::{parse_model, serialize_model, validate, Edge, EdgeKind, ModelDecl, ModelError};
pub use provider::{gen_chain, gen_random_bounded_degree, gen_ring, CounterMachine, FileProvider, Provider, RandomGraph};
pub use rank::{oracle_ranks, Rank, RankSnapshot, RankTable, WorkStats};
pub use transform::{apply_transforms, TransformKind, TransformReport};
