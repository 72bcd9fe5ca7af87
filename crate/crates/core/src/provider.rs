//! State-space providers for lazy sessions, and model generators.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Edge, ModelDecl, VertexId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider does not know vertex `{0}`")]
    UnknownVertex(String),
    #[error("provider failed: {0}")]
    Failed(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("fanout {fanout} needs at least {} states, got {states}", fanout + 1)]
    FanoutTooLarge { fanout: usize, states: usize },
    #[error("{0} must be at least 1")]
    Zero(&'static str),
}

/// Produces a state's outgoing edges on demand, once per state.
pub trait Provider {
    fn initial(&self) -> VertexId;
    /// Outgoing edges of `v`, all with head `v`.
    fn expand(&mut self, v: &str) -> Result<Vec<Edge>, ProviderError>;
}

/// Serves edges from a materialized model.
#[derive(Debug, Clone)]
pub struct FileProvider {
    initial: VertexId,
    out: BTreeMap<VertexId, Vec<Edge>>,
}

impl FileProvider {
    pub fn new(decl: &ModelDecl) -> Self {
        let mut out: BTreeMap<VertexId, Vec<Edge>> =
            decl.vertices.iter().map(|v| (v.clone(), Vec::new())).collect();
        for e in &decl.edges {
            out.entry(e.head.clone()).or_default().push(e.clone());
        }
        FileProvider {
            initial: decl.initial.clone(),
            out,
        }
    }
}

impl Provider for FileProvider {
    fn initial(&self) -> VertexId {
        self.initial.clone()
    }

    fn expand(&mut self, v: &str) -> Result<Vec<Edge>, ProviderError> {
        self.out
            .get(v)
            .cloned()
            .ok_or_else(|| ProviderError::UnknownVertex(v.to_string()))
    }
}

/// States `0..=n`; state `i < n` has the single edge `inc<i>: i -> {i+1}`.
#[derive(Debug, Clone, Copy)]
pub struct CounterMachine {
    pub n: u64,
}

impl Provider for CounterMachine {
    fn initial(&self) -> VertexId {
        "0".to_string()
    }

    fn expand(&mut self, v: &str) -> Result<Vec<Edge>, ProviderError> {
        let i: u64 = v
            .parse()
            .ok()
            .filter(|&i| i <= self.n)
            .ok_or_else(|| ProviderError::UnknownVertex(v.to_string()))?;
        if i == self.n {
            return Ok(Vec::new());
        }
        Ok(vec![Edge::real(&format!("inc{i}"), v, [(i + 1).to_string()])])
    }
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

/// Lazily generated random bounded-degree graph. Expanding a state draws
/// its edges from a generator seeded by (seed, state), so the graph does
/// not depend on the order states are visited in, and materializing it with
/// [`gen_random_bounded_degree`] gives the same model.
#[derive(Debug, Clone)]
pub struct RandomGraph {
    states: usize,
    out_degree: usize,
    fanout: usize,
    seed: u64,
    width: usize,
}

impl RandomGraph {
    pub fn new(states: usize, out_degree: usize, fanout: usize, seed: u64) -> Result<Self, GenError> {
        if states == 0 {
            return Err(GenError::Zero("states"));
        }
        if out_degree == 0 {
            return Err(GenError::Zero("out-degree"));
        }
        if fanout == 0 {
            return Err(GenError::Zero("fanout"));
        }
        if fanout >= states {
            return Err(GenError::FanoutTooLarge { fanout, states });
        }
        Ok(RandomGraph {
            states,
            out_degree,
            fanout,
            seed,
            width: width(states),
        })
    }

    pub fn vertex_name(&self, i: usize) -> String {
        format!("v{i:0w$}", w = self.width)
    }

    fn edges_of(&self, i: usize) -> Vec<Edge> {
        let stream = self.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let head = self.vertex_name(i);
        (0..self.out_degree)
            .map(|j| {
                let tail: Vec<String> = sample(&mut rng, self.states - 1, self.fanout)
                    .into_iter()
                    .map(|t| self.vertex_name(if t >= i { t + 1 } else { t }))
                    .collect();
                Edge::real(&format!("e{i:0w$}_{j}", w = self.width), &head, tail)
            })
            .collect()
    }

    fn index_of(&self, v: &str) -> Option<usize> {
        let digits = v.strip_prefix('v')?;
        if digits.len() != self.width {
            return None;
        }
        digits.parse().ok().filter(|&i| i < self.states)
    }

    pub fn materialize(&self) -> ModelDecl {
        let mut decl = ModelDecl::new(&self.vertex_name(0));
        decl.name = Some(format!(
            "random-n{}-d{}-f{}-s{}",
            self.states, self.out_degree, self.fanout, self.seed
        ));
        for i in 0..self.states {
            decl.vertices.insert(self.vertex_name(i));
            decl.edges.extend(self.edges_of(i));
        }
        decl.sort_edges();
        decl
    }
}

impl Provider for RandomGraph {
    fn initial(&self) -> VertexId {
        self.vertex_name(0)
    }

    fn expand(&mut self, v: &str) -> Result<Vec<Edge>, ProviderError> {
        let i = self
            .index_of(v)
            .ok_or_else(|| ProviderError::UnknownVertex(v.to_string()))?;
        Ok(self.edges_of(i))
    }
}

/// `n` states, `d` edges per state, each tail `f` distinct states other
/// than the head, drawn uniformly. Deterministic in `seed`.
pub fn gen_random_bounded_degree(
    n: usize,
    out_degree: usize,
    fanout: usize,
    seed: u64,
) -> Result<ModelDecl, GenError> {
    Ok(RandomGraph::new(n, out_degree, fanout, seed)?.materialize())
}

/// `s0 -e1-> s1 -e2-> ... -> s<k-1>`: `length` states in a line.
pub fn gen_chain(length: usize) -> Result<ModelDecl, GenError> {
    if length == 0 {
        return Err(GenError::Zero("length"));
    }
    let mut decl = ModelDecl::new("s0");
    decl.name = Some(format!("chain{length}"));
    for i in 1..length {
        decl = decl.with_edge(Edge::real(
            &format!("e{i}"),
            &format!("s{}", i - 1),
            [format!("s{i}")],
        ));
    }
    Ok(decl)
}

/// A deterministic ring `v0 -> v1 -> ... -> v0` plus `extra` random
/// hyperedges with `fanout` tails. Every state can always reach every other
/// through the ring, so the tester is never blocked before full coverage.
pub fn gen_ring(n: usize, extra: usize, fanout: usize, seed: u64) -> Result<ModelDecl, GenError> {
    if n < 2 {
        return Err(GenError::FanoutTooLarge { fanout: 1, states: n });
    }
    if fanout >= n {
        return Err(GenError::FanoutTooLarge { fanout, states: n });
    }
    let w = width(n);
    let name = |i: usize| format!("v{i:0w$}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decl = ModelDecl::new(&name(0));
    decl.name = Some(format!("ring-n{n}-x{extra}-f{fanout}-s{seed}"));
    for i in 0..n {
        decl.vertices.insert(name(i));
        decl.edges
            .push(Edge::real(&format!("r{i:0w$}"), &name(i), [name((i + 1) % n)]));
    }
    for j in 0..extra {
        let head = rng.gen_range(0..n);
        let tail: Vec<String> = sample(&mut rng, n - 1, fanout)
            .into_iter()
            .map(|t| name(if t >= head { t + 1 } else { t }))
            .collect();
        decl.edges.push(Edge::real(&format!("x{j}"), &name(head), tail));
    }
    decl.sort_edges();
    Ok(decl)
}
