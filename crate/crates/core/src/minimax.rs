//! Brute-force game values for small models, used to check the min-rank
//! tester against exhaustive search.

use std::collections::HashMap;

use crate::game::{GameState, Moves, SessionError};
use crate::graph::{GameGraph, VIx};

/// Largest vertex count [`minimax_moves_to_mark`] accepts.
pub const MAX_SEARCH_VERTICES: usize = 8;

fn marks_something(g: &GameGraph, gs: &GameState, e: usize, t: VIx) -> bool {
    !g.is_marked(t) || g.edge(e).interior.iter().any(|i| !gs.interior_marked(i))
}

/// Exact value of the position: the fewest moves the tester can guarantee
/// before something new is marked, against every system behavior.
///
/// Searches the game tree by depth: a position is won within `k` moves if
/// some live edge at it has every response either marking a state or
/// leading to a position won within `k - 1`. Positions are memoized on
/// (current, marked set, depth).
pub fn minimax_moves_to_mark(gs: &GameState) -> Result<Moves, SessionError> {
    let g = gs.graph();
    let n = g.vertex_count();
    if n > MAX_SEARCH_VERTICES {
        return Err(SessionError::TooLarge(n, MAX_SEARCH_VERTICES));
    }
    let marked: u32 = (0..n).filter(|&v| g.is_marked(v)).fold(0, |m, v| m | (1 << v));
    let mut memo: HashMap<(VIx, u32, u32), bool> = HashMap::new();

    fn wins(
        g: &GameGraph,
        gs: &GameState,
        v: VIx,
        marked: u32,
        depth: u32,
        memo: &mut HashMap<(VIx, u32, u32), bool>,
    ) -> bool {
        if depth == 0 {
            return false;
        }
        if let Some(&w) = memo.get(&(v, marked, depth)) {
            return w;
        }
        let w = g.live_out(v).iter().any(|&e| {
            g.edge(e).tail.iter().all(|&t| {
                marks_something(g, gs, e, t) || wins(g, gs, t, marked, depth - 1, memo)
            })
        });
        memo.insert((v, marked, depth), w);
        w
    }

    // a forced marking never needs more moves than there are marked states
    let bound = marked.count_ones();
    for k in 1..=bound {
        if wins(g, gs, gs.current(), marked, k, &mut memo) {
            return Ok(Moves::Finite(k as u64));
        }
    }
    Ok(Moves::Unbounded)
}

/// Worst case, over all system behaviors, of moves until the next marking
/// when the tester always plays [`GameState::choose_at`].
pub fn strategy_worst_case(gs: &mut GameState) -> Moves {
    let mut memo: HashMap<VIx, Moves> = HashMap::new();
    let mut on_path = Vec::new();
    worst(gs, gs.current(), &mut memo, &mut on_path)
}

fn worst(gs: &mut GameState, v: VIx, memo: &mut HashMap<VIx, Moves>, on_path: &mut Vec<VIx>) -> Moves {
    if let Some(&m) = memo.get(&v) {
        return m;
    }
    if on_path.contains(&v) {
        return Moves::Unbounded;
    }
    let Ok(e) = gs.choose_at(v) else {
        memo.insert(v, Moves::Unbounded);
        return Moves::Unbounded;
    };
    on_path.push(v);
    let tail = gs.graph().edge(e).tail.clone();
    let mut result = Moves::Finite(1);
    for t in tail {
        let m = if marks_something(gs.graph(), gs, e, t) {
            Moves::Finite(1)
        } else {
            match worst(gs, t, memo, on_path) {
                Moves::Finite(k) => Moves::Finite(k + 1),
                Moves::Unbounded => Moves::Unbounded,
            }
        };
        result = result.max(m);
    }
    on_path.pop();
    memo.insert(v, result);
    result
}
