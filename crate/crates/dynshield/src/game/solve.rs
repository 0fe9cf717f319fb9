//! The winning region of a safety game: the greatest set of safe states
//! from which the controller has an action keeping every environment
//! response inside the set.

use std::collections::VecDeque;

use super::{GameState, SafetyGame};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinningRegion {
    wins: Vec<bool>,
}

impl WinningRegion {
    pub fn contains(&self, g: GameState) -> bool {
        self.wins[g.index()]
    }

    pub fn count(&self) -> usize {
        self.wins.iter().filter(|&&w| w).count()
    }
}

/// Computes the greatest fixpoint by counter-based removal: a state leaves
/// the set when it is unsafe or when every controller action has some
/// environment response leading outside. Linear in the number of edges.
pub fn winning_region(game: &SafetyGame) -> WinningRegion {
    let n = game.state_count();
    let nc = game.cont().len();
    let ne = game.env().len();
    let succ = game.succ_table();

    let mut in_set: Vec<bool> = (0..n).map(|i| game.is_safe(GameState(i as u32))).collect();

    // preds[t] lists every (source, cont) edge bundle entering t, one entry
    // per env action
    let mut preds: Vec<Vec<(u32, u16)>> = vec![Vec::new(); n];
    for (s, row) in succ.iter().enumerate() {
        for c in 0..nc {
            for e in 0..ne {
                let t = row[c * ne + e];
                preds[t.index()].push((s as u32, c as u16));
            }
        }
    }

    // bad[s][c]: number of env responses leaving the current set
    let mut bad: Vec<u32> = vec![0; n * nc];
    let mut zero: Vec<u32> = vec![0; n];
    for (s, row) in succ.iter().enumerate() {
        for c in 0..nc {
            let b = (0..ne)
                .filter(|&e| !in_set[row[c * ne + e].index()])
                .count() as u32;
            bad[s * nc + c] = b;
            if b == 0 {
                zero[s] += 1;
            }
        }
    }

    let mut queue: VecDeque<u32> = VecDeque::new();
    for s in 0..n {
        if in_set[s] && zero[s] == 0 {
            in_set[s] = false;
            queue.push_back(s as u32);
        }
    }
    // unsafe states were never in the set; their effect is in the counters
    while let Some(t) = queue.pop_front() {
        for &(p, c) in &preds[t as usize] {
            let p = p as usize;
            if !in_set[p] {
                continue;
            }
            let slot = &mut bad[p * nc + c as usize];
            *slot += 1;
            if *slot == 1 {
                zero[p] -= 1;
                if zero[p] == 0 {
                    in_set[p] = false;
                    queue.push_back(p as u32);
                }
            }
        }
    }

    WinningRegion { wins: in_set }
}
