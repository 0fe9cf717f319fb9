//! Safety games over the product of a system model and a safety automaton.
//!
//! The composition is optimistic about the model's partiality: transitions
//! the model does not define route to a fresh sink that counts as safe, so
//! unexplored actions are never blocked merely for being unexplored. Unsafe
//! outputs the model *does* predict still poison an action under every
//! controller choice that can reach them.

mod shield;
mod solve;
mod verify;

pub use shield::{
    synthesize_postposed, synthesize_preemptive, PostPosedShield, PreemptiveShield,
};
pub use solve::{winning_region, WinningRegion};
pub use verify::{verify_shield, Violation};

use std::collections::HashMap;

use crate::alphabet::{Alphabet, Sym};
use crate::fsrs::Fsrs;
use crate::safety::{SafetyAutomaton, SpecState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GameState(pub u32);

impl GameState {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// The reachable product of a model and a specification, with a sink per
/// specification state absorbing the model's undefined transitions. The
/// transition table is total.
#[derive(Debug, Clone)]
pub struct SafetyGame {
    cont: Alphabet,
    env: Alphabet,
    outputs: Alphabet,
    names: Vec<String>,
    initial: GameState,
    /// `succ[state][cont * |env| + env]`
    succ: Vec<Vec<GameState>>,
    /// The model's predicted output per transition; `None` where the move
    /// routes through the sink (no prediction exists).
    out: Vec<Vec<Option<Sym>>>,
    safe: Vec<bool>,
    sink: Vec<bool>,
}

/// Composes the model with the specification. Only states reachable from
/// the initial pair are materialized. When the model leaves a transition
/// undefined the successor keeps the current specification state: no output
/// was predicted, and every sink pair is safe, so the choice cannot create
/// spurious unsafety.
pub fn compose(model: &Fsrs, spec: &SafetyAutomaton) -> Result<SafetyGame> {
    if model.outputs() != spec.sigma() {
        return Err(Error::AlphabetMismatch(
            "specification alphabet differs from the model output alphabet".into(),
        ));
    }
    let machine = model.machine();
    let n_pairs = model.cont().len() * model.env().len();

    // product key: model state (or None for the sink) plus spec state
    type Key = (Option<u32>, SpecState);
    let mut index: HashMap<Key, GameState> = HashMap::new();
    let mut keys: Vec<Key> = Vec::new();
    let intern = |index: &mut HashMap<Key, GameState>,
                  keys: &mut Vec<Key>,
                  k: Key| {
        *index.entry(k).or_insert_with(|| {
            keys.push(k);
            GameState(keys.len() as u32 - 1)
        })
    };

    let start: Key = (Some(machine.initial().0), spec.initial());
    let initial = intern(&mut index, &mut keys, start);
    let mut succ: Vec<Vec<GameState>> = Vec::new();
    let mut out: Vec<Vec<Option<Sym>>> = Vec::new();
    let mut head = 0;
    while head < keys.len() {
        let (m, q) = keys[head];
        let state = GameState(head as u32);
        head += 1;
        let mut row_succ = Vec::with_capacity(n_pairs);
        let mut row_out = Vec::with_capacity(n_pairs);
        for a in 0..n_pairs as u16 {
            let (next, o) = match m {
                None => ((None, q), None), // sink loops
                Some(ms) => match machine.step(crate::mealy::StateId(ms), Sym(a)) {
                    Some((md, b)) => ((Some(md.0), spec.next(q, b)), Some(b)),
                    None => ((None, q), None),
                },
            };
            let target = intern(&mut index, &mut keys, next);
            row_succ.push(target);
            row_out.push(o);
        }
        debug_assert_eq!(succ.len(), state.index());
        succ.push(row_succ);
        out.push(row_out);
    }

    let names = keys
        .iter()
        .map(|&(m, q)| match m {
            Some(ms) => format!(
                "{}|{}",
                machine.state_name(crate::mealy::StateId(ms)),
                spec.state_name(q)
            ),
            None => format!("!|{}", spec.state_name(q)),
        })
        .collect();
    let safe = keys
        .iter()
        .map(|&(m, q)| m.is_none() || spec.is_safe(q))
        .collect();
    let sink = keys.iter().map(|&(m, _)| m.is_none()).collect();

    Ok(SafetyGame {
        cont: model.cont().clone(),
        env: model.env().clone(),
        outputs: model.outputs().clone(),
        names,
        initial,
        succ,
        out,
        safe,
        sink,
    })
}

impl SafetyGame {
    /// Builds a game directly from its tables. The transition table must be
    /// total and every index in range; used for synthetic games in tests and
    /// benchmarks.
    #[allow(clippy::too_many_arguments)]
    pub fn from_tables(
        cont: Alphabet,
        env: Alphabet,
        outputs: Alphabet,
        names: Vec<String>,
        initial: GameState,
        succ: Vec<Vec<GameState>>,
        out: Vec<Vec<Option<Sym>>>,
        safe: Vec<bool>,
        sink: Vec<bool>,
    ) -> Result<Self> {
        let n = names.len();
        let np = cont.len() * env.len();
        if initial.index() >= n {
            return Err(Error::Invalid("initial state out of range".into()));
        }
        if succ.len() != n || out.len() != n || safe.len() != n || sink.len() != n {
            return Err(Error::Invalid("table sizes disagree".into()));
        }
        for row in &succ {
            if row.len() != np || row.iter().any(|g| g.index() >= n) {
                return Err(Error::Invalid("transition table not total".into()));
            }
        }
        Ok(SafetyGame {
            cont,
            env,
            outputs,
            names,
            initial,
            succ,
            out,
            safe,
            sink,
        })
    }

    pub fn state_count(&self) -> usize {
        self.names.len()
    }

    pub fn state_ids(&self) -> impl Iterator<Item = GameState> {
        (0..self.names.len() as u32).map(GameState)
    }

    pub fn state_name(&self, g: GameState) -> &str {
        &self.names[g.index()]
    }

    pub fn initial(&self) -> GameState {
        self.initial
    }

    pub fn cont(&self) -> &Alphabet {
        &self.cont
    }

    pub fn env(&self) -> &Alphabet {
        &self.env
    }

    pub fn outputs(&self) -> &Alphabet {
        &self.outputs
    }

    pub fn pair(&self, c: Sym, e: Sym) -> usize {
        c.index() * self.env.len() + e.index()
    }

    pub fn successor(&self, g: GameState, c: Sym, e: Sym) -> GameState {
        self.succ[g.index()][self.pair(c, e)]
    }

    /// The model's predicted output, absent when the move routes to sink.
    pub fn predicted_output(&self, g: GameState, c: Sym, e: Sym) -> Option<Sym> {
        self.out[g.index()][self.pair(c, e)]
    }

    pub fn is_safe(&self, g: GameState) -> bool {
        self.safe[g.index()]
    }

    pub fn is_sink(&self, g: GameState) -> bool {
        self.sink[g.index()]
    }

    pub(crate) fn succ_table(&self) -> &[Vec<GameState>] {
        &self.succ
    }

    pub(crate) fn out_table(&self) -> &[Vec<Option<Sym>>] {
        &self.out
    }
}
