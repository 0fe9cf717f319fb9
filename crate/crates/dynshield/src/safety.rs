//! Safety automata: total automata over the output alphabet whose unsafe
//! region is absorbing. Their finite-word language is prefix-closed, which
//! is what makes them safety specifications.

use crate::alphabet::{Alphabet, Sym};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpecState(pub u32);

impl SpecState {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyAutomaton {
    states: Vec<String>,
    initial: SpecState,
    safe: Vec<bool>,
    sigma: Alphabet,
    /// `next[state][symbol]`, total by construction.
    next: Vec<Vec<SpecState>>,
}

/// Builder mirroring the `.spec` file layout: alphabet, initial, unsafe
/// states, transitions. `build` validates totality, determinism, absorption
/// of the unsafe region, and safety of the initial state.
pub struct SafetyBuilder {
    sigma: Alphabet,
    initial: String,
    unsafe_states: Vec<String>,
    trans: Vec<(String, String, String)>,
}

impl SafetyBuilder {
    pub fn new(sigma: Alphabet, initial: impl Into<String>) -> Self {
        SafetyBuilder {
            sigma,
            initial: initial.into(),
            unsafe_states: Vec::new(),
            trans: Vec::new(),
        }
    }

    pub fn mark_unsafe(&mut self, state: impl Into<String>) -> &mut Self {
        self.unsafe_states.push(state.into());
        self
    }

    pub fn transition(
        &mut self,
        src: impl Into<String>,
        sym: impl Into<String>,
        dst: impl Into<String>,
    ) -> &mut Self {
        self.trans.push((src.into(), sym.into(), dst.into()));
        self
    }

    pub fn build(self) -> Result<SafetyAutomaton> {
        let mut names: Vec<String> = Vec::new();
        names.push(self.initial.clone());
        names.extend(self.unsafe_states.iter().cloned());
        for (s, _, d) in &self.trans {
            names.push(s.clone());
            names.push(d.clone());
        }
        names.sort();
        names.dedup();
        let id = |n: &str| -> Result<SpecState> {
            names
                .binary_search_by(|x| x.as_str().cmp(n))
                .map(|i| SpecState(i as u32))
                .map_err(|_| Error::UnknownState(n.to_string()))
        };

        let mut safe = vec![true; names.len()];
        for u in &self.unsafe_states {
            safe[id(u)?.index()] = false;
        }
        let initial = id(&self.initial)?;
        if !safe[initial.index()] {
            return Err(Error::Invalid(
                "initial state is unsafe: the empty word already violates the specification"
                    .into(),
            ));
        }

        let mut next: Vec<Vec<Option<SpecState>>> =
            vec![vec![None; self.sigma.len()]; names.len()];
        for (s, a, d) in &self.trans {
            let s = id(s)?;
            let a = self.sigma.require(a)?;
            let d = id(d)?;
            let slot = &mut next[s.index()][a.index()];
            if slot.is_some() {
                return Err(Error::Invalid(format!(
                    "nondeterministic transition from '{}' on '{}'",
                    names[s.index()],
                    self.sigma.name(a)
                )));
            }
            *slot = Some(d);
        }

        let mut total = Vec::with_capacity(names.len());
        for (si, row) in next.into_iter().enumerate() {
            let mut r = Vec::with_capacity(row.len());
            for (ai, cell) in row.into_iter().enumerate() {
                let d = cell.ok_or_else(|| {
                    Error::Invalid(format!(
                        "incomplete transition function: state '{}' has no transition on '{}'",
                        names[si],
                        self.sigma.name(Sym(ai as u16))
                    ))
                })?;
                if safe[d.index()] && !safe[si] {
                    return Err(Error::Invalid(format!(
                        "unsafe region not absorbing: '{}' reaches safe '{}'",
                        names[si],
                        names[d.index()]
                    )));
                }
                r.push(d);
            }
            total.push(r);
        }

        Ok(SafetyAutomaton {
            states: names,
            initial,
            safe,
            sigma: self.sigma,
            next: total,
        })
    }
}

impl SafetyAutomaton {
    /// The two-state automaton rejecting every word that contains one of
    /// `bad`: the usual shape of the benchmark specifications.
    pub fn forbidding(sigma: Alphabet, bad: &[&str]) -> Result<Self> {
        let mut b = SafetyBuilder::new(sigma.clone(), "ok");
        b.mark_unsafe("bad");
        for sym in sigma.names() {
            let dst = if bad.contains(&sym) { "bad" } else { "ok" };
            b.transition("ok", sym, dst);
            b.transition("bad", sym, "bad");
        }
        b.build()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, q: SpecState) -> &str {
        &self.states[q.index()]
    }

    pub fn state(&self, name: &str) -> Option<SpecState> {
        self.states
            .binary_search_by(|x| x.as_str().cmp(name))
            .ok()
            .map(|i| SpecState(i as u32))
    }

    pub fn state_ids(&self) -> impl Iterator<Item = SpecState> {
        (0..self.states.len() as u32).map(SpecState)
    }

    pub fn initial(&self) -> SpecState {
        self.initial
    }

    pub fn sigma(&self) -> &Alphabet {
        &self.sigma
    }

    pub fn is_safe(&self, q: SpecState) -> bool {
        self.safe[q.index()]
    }

    pub fn next(&self, q: SpecState, a: Sym) -> SpecState {
        self.next[q.index()][a.index()]
    }

    /// Runs the automaton over `w` and reports whether the word is accepted
    /// (the run ends in a safe state). Symbols must come from `sigma`.
    pub fn accepts(&self, w: &[Sym]) -> bool {
        let mut q = self.initial;
        for &a in w {
            q = self.next(q, a);
        }
        self.safe[q.index()]
    }

    /// Checked variant over symbol names.
    pub fn accepts_named<'a>(&self, w: impl IntoIterator<Item = &'a str>) -> Result<bool> {
        let mut q = self.initial;
        for name in w {
            q = self.next(q, self.sigma.require(name)?);
        }
        Ok(self.safe[q.index()])
    }
}
