//! Simulated systems under test. Each picks the system's answer from the
//! tail of the edge the tester just played.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::GameState;
use crate::graph::{EIx, VIx};
use crate::rank::Rank;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("scripted response `{vertex}` is not in the tail of edge `{edge}`")]
    IllegalScriptEntry { edge: String, vertex: String },
    #[error("no allowed responses configured for edge `{0}`")]
    MissingAllowed(String),
    #[error("allowed response `{vertex}` is not in the tail of edge `{edge}`")]
    IllegalAllowed { edge: String, vertex: String },
    #[error("malformed line {line}: {msg}")]
    Config { line: usize, msg: String },
}

pub trait Adversary {
    fn respond(&mut self, gs: &GameState, edge: EIx) -> Result<VIx, AdversaryError>;
}

fn sorted_tail(gs: &GameState, edge: EIx) -> Vec<VIx> {
    let g = gs.graph();
    let mut tail = g.edge(edge).tail.clone();
    tail.sort_by(|&a, &b| g.vertex_id(a).cmp(g.vertex_id(b)));
    tail
}

/// Uniform over the tail (in id order) from a seeded generator.
#[derive(Debug, Clone)]
pub struct RandomFair {
    rng: ChaCha8Rng,
}

impl RandomFair {
    pub fn new(seed: u64) -> Self {
        RandomFair {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Adversary for RandomFair {
    fn respond(&mut self, gs: &GameState, edge: EIx) -> Result<VIx, AdversaryError> {
        let tail = sorted_tail(gs, edge);
        Ok(tail[self.rng.gen_range(0..tail.len())])
    }
}

/// Blocks coverage whenever it can: an unreachable tail vertex if there is
/// one, else the marked tail vertex of largest rank, else the first tail
/// vertex. Ranks come from the naive oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct Avoider;

impl Adversary for Avoider {
    fn respond(&mut self, gs: &GameState, edge: EIx) -> Result<VIx, AdversaryError> {
        let ranks = gs.oracle();
        let tail = sorted_tail(gs, edge);
        if let Some(&v) = tail.iter().find(|&&v| ranks.vertex[v] == Rank::Unreachable) {
            return Ok(v);
        }
        let mut best: Option<VIx> = None;
        for &v in tail.iter().filter(|&&v| gs.is_marked(v)) {
            if best.is_none_or(|b| ranks.vertex[v] > ranks.vertex[b]) {
                best = Some(v);
            }
        }
        Ok(best.unwrap_or(tail[0]))
    }
}

/// An implementation that only ever takes some of the allowed transitions:
/// uniform over `allowed[edge]`.
#[derive(Debug, Clone)]
pub struct Subset {
    allowed: BTreeMap<String, Vec<String>>,
    rng: ChaCha8Rng,
}

impl Subset {
    pub fn new(allowed: BTreeMap<String, Vec<String>>, seed: u64) -> Self {
        let allowed = allowed
            .into_iter()
            .map(|(k, mut v)| {
                v.sort();
                v.dedup();
                (k, v)
            })
            .collect();
        Subset {
            allowed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Parses lines of the form `edge <id>: <v1> <v2> ...`.
    pub fn parse_allowed(text: &str) -> Result<BTreeMap<String, Vec<String>>, AdversaryError> {
        let mut out = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| AdversaryError::Config {
                line: i + 1,
                msg: msg.to_string(),
            };
            let rest = line
                .strip_prefix("edge ")
                .ok_or_else(|| err("expected `edge <id>: <vertices>`"))?;
            let (id, vs) = rest.split_once(':').ok_or_else(|| err("missing `:`"))?;
            let vs: Vec<String> = vs.split_whitespace().map(str::to_string).collect();
            if vs.is_empty() {
                return Err(err("empty response set"));
            }
            out.insert(id.trim().to_string(), vs);
        }
        Ok(out)
    }
}

impl Adversary for Subset {
    fn respond(&mut self, gs: &GameState, edge: EIx) -> Result<VIx, AdversaryError> {
        let g = gs.graph();
        let id = &g.edge(edge).id;
        let allowed = self
            .allowed
            .get(id)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| AdversaryError::MissingAllowed(id.clone()))?;
        let mut picks = Vec::with_capacity(allowed.len());
        for name in allowed {
            match g.vertex(name) {
                Ok(v) if g.edge(edge).tail.contains(&v) => picks.push(v),
                _ => {
                    return Err(AdversaryError::IllegalAllowed {
                        edge: id.clone(),
                        vertex: name.clone(),
                    })
                }
            }
        }
        Ok(picks[self.rng.gen_range(0..picks.len())])
    }
}

/// Replays a fixed list of responses.
#[derive(Debug, Clone, Default)]
pub struct Scripted {
    script: VecDeque<String>,
}

impl Scripted {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Scripted {
            script: script.into_iter().map(Into::into).collect(),
        }
    }

    /// One vertex per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Scripted::new(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl Adversary for Scripted {
    fn respond(&mut self, gs: &GameState, edge: EIx) -> Result<VIx, AdversaryError> {
        let name = self.script.pop_front().ok_or(AdversaryError::ScriptExhausted)?;
        let g = gs.graph();
        match g.vertex(&name) {
            Ok(v) if g.edge(edge).tail.contains(&v) => Ok(v),
            _ => Err(AdversaryError::IllegalScriptEntry {
                edge: g.edge(edge).id.clone(),
                vertex: name,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{run_session, GameState, Limits, Termination};
    use crate::model::fixtures::*;
    use crate::model::{parse_model, ModelDecl};

    fn decl(text: &str) -> ModelDecl {
        parse_model(text).unwrap()
    }

    fn respond_id(adv: &mut dyn Adversary, gs: &GameState, edge: &str) -> Result<String, AdversaryError> {
        let e = gs.graph().edge_by_id(edge).unwrap();
        adv.respond(gs, e).map(|v| gs.graph().vertex_id(v).to_string())
    }

    #[test]
    fn random_is_reproducible() {
        let gs = GameState::start(&decl(G1)).unwrap();
        let draw = |seed| {
            let mut a = RandomFair::new(seed);
            (0..32).map(|_| respond_id(&mut a, &gs, "a").unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert!(draw(11).iter().all(|v| v == "s1" || v == "s2"));

        let gs = GameState::start(&decl(G2)).unwrap();
        for seed in 0..10 {
            assert_eq!(respond_id(&mut RandomFair::new(seed), &gs, "e1").unwrap(), "s1");
        }
    }

    #[test]
    fn random_is_fair_on_two_outcomes() {
        let gs = GameState::start(&decl(G1)).unwrap();
        let mut a = RandomFair::new(2024);
        let n = 10_000;
        let s1 = (0..n)
            .filter(|_| respond_id(&mut a, &gs, "a").unwrap() == "s1")
            .count();
        let freq = s1 as f64 / n as f64;
        assert!((0.45..=0.55).contains(&freq), "{freq}");
    }

    #[test]
    fn avoider_choices() {
        let gs = GameState::start(&decl(G1)).unwrap();
        assert_eq!(respond_id(&mut Avoider, &gs, "a").unwrap(), "s1");

        let gs = GameState::at_position(&decl(G1), &["s1"], "s0").unwrap();
        assert_eq!(respond_id(&mut Avoider, &gs, "a").unwrap(), "s1");

        // both tails marked and reachable: ranks 2 (p) and 5 (q)
        let text = "initial h\nedge x h -> p q\nedge pe p -> u\n\
                    edge qa q -> q1\nedge qb q1 -> q2\nedge qc q2 -> q3\nedge qd q3 -> u2\n";
        let gs = GameState::at_position(&decl(text), &["p", "q", "q1", "q2", "q3"], "h").unwrap();
        let o = gs.oracle();
        let g = gs.graph();
        assert_eq!(o.vertex[g.vertex("p").unwrap()], Rank::Finite(2));
        assert_eq!(o.vertex[g.vertex("q").unwrap()], Rank::Finite(5));
        assert_eq!(respond_id(&mut Avoider, &gs, "x").unwrap(), "q");
    }

    #[test]
    fn subset_responses() {
        let gs = GameState::start(&decl(G1)).unwrap();
        let allowed = BTreeMap::from([("a".to_string(), vec!["s1".to_string()])]);
        let mut sub = Subset::new(allowed.clone(), 3);
        for _ in 0..10 {
            assert_eq!(respond_id(&mut sub, &gs, "a").unwrap(), "s1");
        }
        let (_, stats) = run_session(&decl(G1), &mut Subset::new(allowed, 3), &Limits::default()).unwrap();
        assert_eq!(stats.states_marked_e, 2);
        assert_eq!(stats.terminated, Some(Termination::Unreachable));

        let only_s2 = BTreeMap::from([("a".to_string(), vec!["s2".to_string()])]);
        assert_eq!(respond_id(&mut Subset::new(only_s2, 0), &gs, "a").unwrap(), "s2");

        let full = BTreeMap::from([("a".to_string(), vec!["s2".to_string(), "s1".to_string()])]);
        let mut sub = Subset::new(full, 9);
        let mut rnd = RandomFair::new(9);
        for _ in 0..50 {
            assert_eq!(respond_id(&mut sub, &gs, "a"), respond_id(&mut rnd, &gs, "a"));
        }

        let mut empty = Subset::new(BTreeMap::new(), 0);
        assert_eq!(
            respond_id(&mut empty, &gs, "a"),
            Err(AdversaryError::MissingAllowed("a".into()))
        );
    }

    #[test]
    fn allowed_file_format() {
        let m = Subset::parse_allowed("# comment\nedge a: s1 s2\nedge b:s0\n").unwrap();
        assert_eq!(m["a"], vec!["s1", "s2"]);
        assert_eq!(m["b"], vec!["s0"]);
        assert!(matches!(
            Subset::parse_allowed("edge a s1\n"),
            Err(AdversaryError::Config { line: 1, .. })
        ));
    }

    #[test]
    fn scripted_responses() {
        let gs = GameState::start(&decl(G1)).unwrap();
        assert_eq!(respond_id(&mut Scripted::new(["s2"]), &gs, "a").unwrap(), "s2");
        assert_eq!(
            respond_id(&mut Scripted::new(["s0"]), &gs, "a"),
            Err(AdversaryError::IllegalScriptEntry {
                edge: "a".into(),
                vertex: "s0".into()
            })
        );
        assert_eq!(
            respond_id(&mut Scripted::default(), &gs, "a"),
            Err(AdversaryError::ScriptExhausted)
        );
        assert_eq!(Scripted::parse("s1\n\n# x\ns2\n").remaining(), 2);
    }

    #[test]
    fn avoider_never_marks_from_an_unreachable_state() {
        let mut gs = GameState::at_position(&decl(G1), &["s1"], "s1").unwrap();
        assert!(gs.is_terminal());
        for _ in 0..30 {
            let e = gs.graph().live_out(gs.current())[0];
            let v = Avoider.respond(&gs, e).unwrap();
            assert!(!gs.apply_response(e, v).unwrap().newly_marked);
        }
    }
}
