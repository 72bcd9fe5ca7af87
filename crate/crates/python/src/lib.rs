//! Python bindings: models, transforms, generators and testing sessions.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use hypergame::adversary::{Adversary, Avoider, RandomFair, Scripted, Subset};
use hypergame::game::{GameState, Limits, Moves, MoveRecord};
use hypergame::minimax::{minimax_moves_to_mark, strategy_worst_case};
use hypergame::model::{parse_model, serialize_model, ModelDecl};
use hypergame::provider::{self, FileProvider};
use hypergame::transform::{apply_transforms, parse_transform_list};
use hypergame::{oracle_ranks, Rank};

create_exception!(pyhypergame, HypergameError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    HypergameError::new_err(e.to_string())
}

fn rank(r: Rank) -> Option<u64> {
    r.finite()
}

fn moves(m: Moves) -> Option<u64> {
    match m {
        Moves::Finite(n) => Some(n),
        Moves::Unbounded => None,
    }
}

fn json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// A parsed model. Immutable; transforms return new models.
#[pyclass(frozen, skip_from_py_object, module = "pyhypergame")]
#[derive(Clone)]
struct Model {
    decl: ModelDecl,
}

#[pymethods]
impl Model {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Model {
            decl: parse_model(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(err)?;
        Model::new(&text)
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.decl.name.clone()
    }

    #[getter]
    fn initial(&self) -> String {
        self.decl.initial.clone()
    }

    #[getter]
    fn vertices(&self) -> Vec<String> {
        self.decl.vertices.iter().cloned().collect()
    }

    /// `(id, head, tail)` triples sorted by id.
    #[getter]
    fn edges(&self) -> Vec<(String, String, Vec<String>)> {
        self.decl
            .edges
            .iter()
            .map(|e| (e.id.clone(), e.head.clone(), e.tail.clone()))
            .collect()
    }

    /// Oracle ranks after marking `after_mark`; None means unreachable.
    #[pyo3(signature = (after_mark = Vec::new()))]
    #[allow(clippy::type_complexity)]
    fn ranks(
        &self,
        after_mark: Vec<String>,
    ) -> PyResult<(BTreeMap<String, Option<u64>>, BTreeMap<String, Option<u64>>)> {
        let marks: Vec<&str> = after_mark
            .iter()
            .map(String::as_str)
            .filter(|m| *m != self.decl.initial)
            .collect();
        let gs = GameState::at_position(&self.decl, &marks, &self.decl.initial).map_err(err)?;
        let g = gs.graph();
        let r = oracle_ranks(g, true);
        let vertices = (0..g.vertex_count())
            .map(|v| (g.vertex_id(v).to_string(), rank(r.vertex[v])))
            .collect();
        let edges = (0..g.edge_count())
            .map(|e| (g.edge(e).id.clone(), rank(r.edge[e])))
            .collect();
        Ok((vertices, edges))
    }

    /// Applies a comma-separated transform list; returns the new model and
    /// the parsed JSON report.
    fn transform<'py>(&self, py: Python<'py>, apply: &str) -> PyResult<(Model, Bound<'py, PyAny>)> {
        let kinds = parse_transform_list(apply).map_err(err)?;
        let (decl, reports) = apply_transforms(&self.decl, &kinds).map_err(err)?;
        let body: Vec<serde_json::Value> = reports
            .iter()
            .map(|(k, r)| serde_json::json!({ "transform": k, "report": r }))
            .collect();
        let report = json(py, &serde_json::Value::Array(body).to_string())?;
        Ok((Model { decl }, report))
    }

    /// Minimax moves-to-next-marking from the initial position and the
    /// min-rank strategy's worst case; None means unbounded.
    fn solve(&self) -> PyResult<(Option<u64>, Option<u64>)> {
        let mut gs = GameState::start(&self.decl).map_err(err)?;
        let value = minimax_moves_to_mark(&gs).map_err(err)?;
        Ok((moves(value), moves(strategy_worst_case(&mut gs))))
    }

    fn text(&self) -> String {
        serialize_model(&self.decl)
    }

    fn __str__(&self) -> String {
        self.text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(name={:?}, vertices={}, edges={})",
            self.decl.name.as_deref().unwrap_or(""),
            self.decl.vertices.len(),
            self.decl.edges.len()
        )
    }

    fn __eq__(&self, other: &Model) -> bool {
        self.decl == other.decl
    }
}

fn record<'py>(py: Python<'py>, m: &MoveRecord) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::json!({
        "index": m.index,
        "from": m.from,
        "edge": m.edge,
        "response": m.response,
        "newly_marked": m.newly_marked,
        "rank_before": rank(m.rank_before),
    });
    json(py, &value.to_string())
}

/// A testing session played step by step or to completion.
#[pyclass(unsendable, module = "pyhypergame")]
struct Session {
    state: GameState,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (model, lazy = false))]
    fn new(model: &Model, lazy: bool) -> PyResult<Self> {
        let state = if lazy {
            GameState::start_lazy(Box::new(FileProvider::new(&model.decl)))
        } else {
            GameState::start(&model.decl)
        }
        .map_err(err)?;
        Ok(Session { state })
    }

    #[getter]
    fn current(&self) -> String {
        self.state.current_id().to_string()
    }

    #[getter]
    fn coverage(&self) -> usize {
        self.state.coverage()
    }

    #[getter]
    fn states_total(&self) -> usize {
        self.state.states_total()
    }

    #[getter]
    fn moves(&self) -> u64 {
        self.state.moves()
    }

    fn rank(&mut self, vertex: &str) -> PyResult<Option<u64>> {
        let v = self.state.graph().vertex(vertex).map_err(err)?;
        Ok(rank(self.state.rank_of(v)))
    }

    fn is_terminal(&mut self) -> bool {
        self.state.is_terminal()
    }

    fn is_marked(&self, vertex: &str) -> PyResult<bool> {
        Ok(self.state.is_marked(self.state.graph().vertex(vertex).map_err(err)?))
    }

    /// The min-rank edge at the current state.
    fn choose(&mut self) -> PyResult<String> {
        let e = self.state.tester_choose().map_err(err)?;
        Ok(self.state.graph().edge(e).id.clone())
    }

    /// Plays `edge` with system response `vertex`.
    fn respond<'py>(&mut self, py: Python<'py>, edge: &str, vertex: &str) -> PyResult<Bound<'py, PyAny>> {
        let g = self.state.graph();
        let e = g.edge_by_id(edge).map_err(err)?;
        let v = g.vertex(vertex).map_err(err)?;
        let m = self.state.apply_response(e, v).map_err(err)?;
        record(py, &m)
    }

    /// Plays until the session stops. Returns the TSV transcript and the
    /// stats object.
    #[pyo3(signature = (adversary = "random", seed = 0, max_moves = 1_000_000, script = None, allowed = None))]
    fn run<'py>(
        &mut self,
        py: Python<'py>,
        adversary: &str,
        seed: u64,
        max_moves: u64,
        script: Option<Vec<String>>,
        allowed: Option<BTreeMap<String, Vec<String>>>,
    ) -> PyResult<(String, Bound<'py, PyAny>)> {
        let mut adv: Box<dyn Adversary> = match adversary {
            "random" => Box::new(RandomFair::new(seed)),
            "avoider" => Box::new(Avoider),
            "script" => Box::new(Scripted::new(script.ok_or_else(|| err("script adversary needs script"))?)),
            "subset" => Box::new(Subset::new(allowed.ok_or_else(|| err("subset adversary needs allowed"))?, seed)),
            other => return Err(err(format!("unknown adversary `{other}`"))),
        };
        let (t, s) = self.state.run(adv.as_mut(), &Limits { max_moves }).map_err(err)?;
        Ok((t.to_tsv(), json(py, &s.to_json(Some(seed)).to_string())?))
    }

    fn stats<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let reason = self.state.termination(&Limits::default());
        json(py, &self.state.stats(reason).to_json(None).to_string())
    }
}

#[pyfunction]
#[pyo3(signature = (states, out_degree, fanout, seed = 0))]
fn gen_random(states: usize, out_degree: usize, fanout: usize, seed: u64) -> PyResult<Model> {
    let decl = provider::gen_random_bounded_degree(states, out_degree, fanout, seed).map_err(err)?;
    Ok(Model { decl })
}

#[pyfunction]
fn gen_chain(length: usize) -> PyResult<Model> {
    Ok(Model {
        decl: provider::gen_chain(length).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (states, extra = 0, fanout = 2, seed = 0))]
fn gen_ring(states: usize, extra: usize, fanout: usize, seed: u64) -> PyResult<Model> {
    Ok(Model {
        decl: provider::gen_ring(states, extra, fanout, seed).map_err(err)?,
    })
}

#[pymodule]
pub fn pyhypergame(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("HypergameError", m.py().get_type::<HypergameError>())?;
    m.add_class::<Model>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(gen_random, m)?)?;
    m.add_function(wrap_pyfunction!(gen_chain, m)?)?;
    m.add_function(wrap_pyfunction!(gen_ring, m)?)?;
    Ok(())
}
