//! Preemptive and post-posed shields synthesized from a solved safety game.
//!
//! The static tables (states, transitions, allowed sets) are immutable after
//! synthesis; the runtime cursor (current state plus divergence flag) is the
//! only mutable part and is owned by one episode loop at a time.

use crate::alphabet::{Alphabet, Sym};

use super::{GameState, SafetyGame, WinningRegion};

/// A shield that answers "which controller actions are safe here". The
/// allowed set depends only on the current state, never on the incoming
/// input. For states outside the winning region the raw set is empty and
/// the runtime query falls back to the full controller alphabet, counting
/// the interference; likewise after a divergence between the model's
/// prediction and the observed output.
#[derive(Debug, Clone, PartialEq)]
pub struct PreemptiveShield {
    cont: Alphabet,
    env: Alphabet,
    outputs: Alphabet,
    names: Vec<String>,
    initial: GameState,
    succ: Vec<Vec<GameState>>,
    out: Vec<Vec<Option<Sym>>>,
    /// Raw allowed set per state: for winning states the actions keeping
    /// every environment response winning; empty for losing states.
    allowed: Vec<Vec<Sym>>,
    winning: Vec<bool>,
    all_cont: Vec<Sym>,
    // runtime cursor
    state: GameState,
    diverged: bool,
    fallback_queries: u64,
}

impl PreemptiveShield {
    /// States are re-sorted by name so that structurally equal shields have
    /// identical tables regardless of how their games were discovered.
    pub(crate) fn from_parts(
        cont: Alphabet,
        env: Alphabet,
        outputs: Alphabet,
        names: Vec<String>,
        initial: GameState,
        succ: Vec<Vec<GameState>>,
        out: Vec<Vec<Option<Sym>>>,
        allowed: Vec<Vec<Sym>>,
    ) -> Self {
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.sort_by(|&a, &b| names[a].cmp(&names[b]));
        let mut rank = vec![0u32; names.len()];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new as u32;
        }
        let remap = |g: GameState| GameState(rank[g.index()]);

        let names: Vec<String> = order.iter().map(|&i| names[i].clone()).collect();
        let succ: Vec<Vec<GameState>> = order
            .iter()
            .map(|&i| succ[i].iter().map(|&g| remap(g)).collect())
            .collect();
        let out: Vec<Vec<Option<Sym>>> = order.iter().map(|&i| out[i].clone()).collect();
        let allowed: Vec<Vec<Sym>> = order.iter().map(|&i| allowed[i].clone()).collect();
        let initial = remap(initial);

        let winning = allowed.iter().map(|a| !a.is_empty()).collect();
        let all_cont = cont.syms().collect();
        PreemptiveShield {
            cont,
            env,
            outputs,
            names,
            initial,
            succ,
            out,
            allowed,
            winning,
            all_cont,
            state: initial,
            diverged: false,
            fallback_queries: 0,
        }
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

    pub fn state_count(&self) -> usize {
        self.names.len()
    }

    pub fn state_name(&self, g: GameState) -> &str {
        &self.names[g.index()]
    }

    pub fn state_by_name(&self, name: &str) -> Option<GameState> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| GameState(i as u32))
    }

    pub fn initial(&self) -> GameState {
        self.initial
    }

    pub fn current(&self) -> GameState {
        self.state
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged
    }

    pub fn is_winning(&self, g: GameState) -> bool {
        self.winning[g.index()]
    }

    /// Times an allowed-set query had to fall back to the full alphabet.
    pub fn fallback_queries(&self) -> u64 {
        self.fallback_queries
    }

    fn pair(&self, c: Sym, e: Sym) -> usize {
        c.index() * self.env.len() + e.index()
    }

    pub fn successor(&self, g: GameState, c: Sym, e: Sym) -> GameState {
        self.succ[g.index()][self.pair(c, e)]
    }

    pub fn predicted_output(&self, g: GameState, c: Sym, e: Sym) -> Option<Sym> {
        self.out[g.index()][self.pair(c, e)]
    }

    /// The raw per-state allowed set, before the runtime fallback.
    pub fn allowed_at(&self, g: GameState) -> &[Sym] {
        &self.allowed[g.index()]
    }

    /// The runtime query: never empty. Counts a fallback when the raw set
    /// cannot be served.
    pub fn allowed_actions(&mut self) -> &[Sym] {
        if self.diverged || !self.winning[self.state.index()] {
            self.fallback_queries += 1;
            return &self.all_cont;
        }
        debug_assert!(!self.allowed[self.state.index()].is_empty());
        &self.allowed[self.state.index()]
    }

    /// Read-only variant used by verification; reports whether this is a
    /// fallback answer instead of counting it.
    pub fn allowed_view(&self, g: GameState, diverged: bool) -> (&[Sym], bool) {
        if diverged || !self.winning[g.index()] {
            (&self.all_cont, true)
        } else {
            (&self.allowed[g.index()], false)
        }
    }

    /// Advances the cursor on an executed step. If the model predicted a
    /// different output than observed, the shield flags divergence and
    /// abstains (full alphabet) until reset or rebuild; moves routed to the
    /// sink carry no prediction and advance silently.
    pub fn advance(&mut self, c: Sym, e: Sym, observed: Sym) {
        if self.diverged {
            return;
        }
        let p = self.pair(c, e);
        match self.out[self.state.index()][p] {
            Some(predicted) if predicted != observed => self.diverged = true,
            _ => self.state = self.succ[self.state.index()][p],
        }
    }

    /// Back to the initial state with a clear divergence flag.
    pub fn reset(&mut self) {
        self.state = self.initial;
        self.diverged = false;
    }

    pub(crate) fn names(&self) -> &[String] {
        &self.names
    }

    pub(crate) fn succ_table(&self) -> &[Vec<GameState>] {
        &self.succ
    }

    pub(crate) fn out_table(&self) -> &[Vec<Option<Sym>>] {
        &self.out
    }
}

/// Builds the preemptive shield of a solved game: at winning states the
/// allowed set collects the actions whose every environment response stays
/// winning.
pub fn synthesize_preemptive(game: &SafetyGame, w: &WinningRegion) -> PreemptiveShield {
    let nc = game.cont().len();
    let ne = game.env().len();
    let mut allowed: Vec<Vec<Sym>> = Vec::with_capacity(game.state_count());
    for g in game.state_ids() {
        let mut acts = Vec::new();
        if w.contains(g) {
            for c in 0..nc {
                let all_in = (0..ne).all(|e| {
                    w.contains(game.successor(g, Sym(c as u16), Sym(e as u16)))
                });
                if all_in {
                    acts.push(Sym(c as u16));
                }
            }
        }
        allowed.push(acts);
    }
    PreemptiveShield::from_parts(
        game.cont().clone(),
        game.env().clone(),
        game.outputs().clone(),
        game.state_ids().map(|g| game.state_name(g).to_string()).collect(),
        game.initial(),
        game.succ_table().to_vec(),
        game.out_table().to_vec(),
        allowed,
    )
}

/// A shield that substitutes a safe action for an unsafe proposal instead of
/// returning the whole allowed set. Proposals already allowed pass through
/// unchanged; otherwise the shortlex-smallest allowed action is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct PostPosedShield {
    inner: PreemptiveShield,
}

impl PostPosedShield {
    pub fn inner(&self) -> &PreemptiveShield {
        &self.inner
    }

    /// The substitution rule at an explicit state, ignoring the cursor.
    pub fn substitute_at(&self, g: GameState, diverged: bool, proposal: Sym) -> Sym {
        let (allowed, _) = self.inner.allowed_view(g, diverged);
        if allowed.contains(&proposal) {
            proposal
        } else {
            allowed[0]
        }
    }

    /// The substitution rule at the current cursor.
    pub fn substitute(&self, proposal: Sym) -> Sym {
        self.substitute_at(self.inner.current(), self.inner.is_diverged(), proposal)
    }

    pub fn advance(&mut self, c: Sym, e: Sym, observed: Sym) {
        self.inner.advance(c, e, observed);
    }

    pub fn reset(&mut self) {
        self.inner.reset();
    }
}

pub fn synthesize_postposed(shield: PreemptiveShield) -> PostPosedShield {
    PostPosedShield { inner: shield }
}
