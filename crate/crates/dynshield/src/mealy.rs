//! Mealy machines with partial transitions.
//!
//! A machine is a finite state set, an initial state, input and output
//! alphabets, and a partial map `(state, input) -> (state, output)`. Keeping
//! the successor and the output in one map makes "transition defined iff
//! output defined" hold by construction.

use std::collections::BTreeMap;

use crate::alphabet::{Alphabet, Sym};
use crate::{Error, Result};

/// Index of a state within its machine. State names are canonicalized to
/// sorted order at construction, so equal machines have equal indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An input word.
pub type Word = Vec<Sym>;

/// An input/output word: the trace of a run.
pub type IoWord = Vec<(Sym, Sym)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MealyMachine {
    states: Vec<String>,
    initial: StateId,
    inputs: Alphabet,
    outputs: Alphabet,
    trans: BTreeMap<(StateId, Sym), (StateId, Sym)>,
}

/// Incremental construction; state names are collected and sorted on `build`.
pub struct MealyBuilder {
    inputs: Alphabet,
    outputs: Alphabet,
    initial: String,
    trans: Vec<(String, String, String, String)>, // src, input, dst, out
}

impl MealyBuilder {
    pub fn new(inputs: Alphabet, outputs: Alphabet, initial: impl Into<String>) -> Self {
        MealyBuilder {
            inputs,
            outputs,
            initial: initial.into(),
            trans: Vec::new(),
        }
    }

    pub fn transition(
        &mut self,
        src: impl Into<String>,
        input: impl Into<String>,
        dst: impl Into<String>,
        out: impl Into<String>,
    ) -> &mut Self {
        self.trans
            .push((src.into(), input.into(), dst.into(), out.into()));
        self
    }

    pub fn build(self) -> Result<MealyMachine> {
        let mut names: Vec<String> = Vec::with_capacity(self.trans.len() + 1);
        names.push(self.initial.clone());
        for (s, _, d, _) in &self.trans {
            names.push(s.clone());
            names.push(d.clone());
        }
        names.sort();
        names.dedup();
        let id = |n: &str| -> StateId {
            StateId(names.binary_search_by(|x| x.as_str().cmp(n)).unwrap() as u32)
        };
        let initial = id(&self.initial);
        let mut trans = BTreeMap::new();
        for (s, a, d, o) in &self.trans {
            let a = self.inputs.require(a)?;
            let o = self.outputs.require(o)?;
            let key = (id(s), a);
            if trans.insert(key, (id(d), o)).is_some() {
                return Err(Error::Invalid(format!(
                    "nondeterministic transition from '{s}' on '{}'",
                    self.inputs.name(a)
                )));
            }
        }
        Ok(MealyMachine {
            states: names,
            initial,
            inputs: self.inputs,
            outputs: self.outputs,
            trans,
        })
    }
}

impl MealyMachine {
    /// A machine with a single state and no transitions.
    pub fn trivial(inputs: Alphabet, outputs: Alphabet, state: impl Into<String>) -> Self {
        MealyMachine {
            states: vec![state.into()],
            initial: StateId(0),
            inputs,
            outputs,
            trans: BTreeMap::new(),
        }
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.index()]
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.states.iter().map(|s| s.as_str())
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len() as u32).map(StateId)
    }

    pub fn state(&self, name: &str) -> Option<StateId> {
        self.states
            .binary_search_by(|x| x.as_str().cmp(name))
            .ok()
            .map(|i| StateId(i as u32))
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn inputs(&self) -> &Alphabet {
        &self.inputs
    }

    pub fn outputs(&self) -> &Alphabet {
        &self.outputs
    }

    /// One transition: `Some((successor, output))` when defined.
    /// State and symbol validity is the caller's job at this level; the typed
    /// ids cannot name an unknown state or symbol.
    pub fn step(&self, s: StateId, a: Sym) -> Option<(StateId, Sym)> {
        self.trans.get(&(s, a)).copied()
    }

    /// Checked variant of [`step`](Self::step) for unvalidated names.
    pub fn step_named(&self, state: &str, input: &str) -> Result<Option<(StateId, Sym)>> {
        let s = self
            .state(state)
            .ok_or_else(|| Error::UnknownState(state.to_string()))?;
        let a = self.inputs.require(input)?;
        Ok(self.step(s, a))
    }

    /// Folds [`step`](Self::step) along `w` from the initial state. Returns
    /// the final state and the last output (`None` output for the empty
    /// word), or `None` if any step is undefined.
    pub fn run(&self, w: &[Sym]) -> Option<(StateId, Option<Sym>)> {
        let mut state = self.initial;
        let mut last = None;
        for &a in w {
            let (next, out) = self.step(state, a)?;
            state = next;
            last = Some(out);
        }
        Some((state, last))
    }

    /// Runs from an arbitrary state instead of the initial one.
    pub fn run_from(&self, from: StateId, w: &[Sym]) -> Option<(StateId, Option<Sym>)> {
        let mut state = from;
        let mut last = None;
        for &a in w {
            let (next, out) = self.step(state, a)?;
            state = next;
            last = Some(out);
        }
        Some((state, last))
    }

    /// The machine output over `w`: the output of the last step.
    pub fn output(&self, w: &[Sym]) -> Option<Sym> {
        self.run(w).and_then(|(_, o)| o)
    }

    /// Deterministic iteration over all transitions.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, Sym, StateId, Sym)> + '_ {
        self.trans.iter().map(|(&(s, a), &(d, o))| (s, a, d, o))
    }

    pub fn transition_count(&self) -> usize {
        self.trans.len()
    }

    /// Outgoing transitions of one state, in input order.
    pub fn outgoing(&self, s: StateId) -> impl Iterator<Item = (Sym, StateId, Sym)> + '_ {
        self.trans
            .range((s, Sym(0))..=(s, Sym(u16::MAX)))
            .map(|(&(_, a), &(d, o))| (a, d, o))
    }

    /// Renames every state via `f` (must stay injective) without touching
    /// structure.
    pub fn rename_states(&self, f: impl Fn(&str) -> String) -> Result<MealyMachine> {
        let mut b = MealyBuilder::new(
            self.inputs.clone(),
            self.outputs.clone(),
            f(self.state_name(self.initial)),
        );
        for (s, a, d, o) in self.transitions() {
            b.transition(
                f(self.state_name(s)),
                self.inputs.name(a),
                f(self.state_name(d)),
                self.outputs.name(o),
            );
        }
        let renamed = b.build()?;
        if renamed.state_count() != self.state_count() {
            return Err(Error::Invalid("state renaming is not injective".into()));
        }
        Ok(renamed)
    }

    /// Canonical form: states renamed `s0, s1, ...` in breadth-first
    /// discovery order (inputs in index order). Two reachable deterministic
    /// machines are isomorphic iff their canonical forms are equal.
    pub fn canonical_form(&self) -> MealyMachine {
        let mut order: Vec<Option<u32>> = vec![None; self.state_count()];
        let mut queue = std::collections::VecDeque::new();
        order[self.initial.index()] = Some(0);
        queue.push_back(self.initial);
        let mut next = 1u32;
        while let Some(s) = queue.pop_front() {
            for (_, d, _) in self.outgoing(s) {
                if order[d.index()].is_none() {
                    order[d.index()] = Some(next);
                    next += 1;
                    queue.push_back(d);
                }
            }
        }
        let width = next.to_string().len();
        self.rename_states(|name| {
            let id = self.state(name).unwrap();
            match order[id.index()] {
                Some(i) => format!("s{i:0width$}"),
                // unreachable states keep a distinct tail section
                None => format!("u_{name}"),
            }
        })
        .expect("canonical renaming is injective")
    }

    /// True iff the two machines are isomorphic restricted to their
    /// reachable parts.
    pub fn isomorphic(&self, other: &MealyMachine) -> bool {
        let a = self.canonical_form();
        let b = other.canonical_form();
        a.inputs == b.inputs
            && a.outputs == b.outputs
            && a.initial == b.initial
            && a.trans == b.trans
            && a.reachable_count() == b.reachable_count()
    }

    fn reachable_count(&self) -> usize {
        let mut seen = vec![false; self.state_count()];
        let mut stack = vec![self.initial];
        seen[self.initial.index()] = true;
        let mut n = 1;
        while let Some(s) = stack.pop() {
            for (_, d, _) in self.outgoing(s) {
                if !seen[d.index()] {
                    seen[d.index()] = true;
                    n += 1;
                    stack.push(d);
                }
            }
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> MealyMachine {
        let inputs = Alphabet::new(["a", "b"]).unwrap();
        let outputs = Alphabet::new(["0", "1"]).unwrap();
        let mut b = MealyBuilder::new(inputs, outputs, "even");
        b.transition("even", "a", "odd", "1");
        b.transition("odd", "a", "even", "0");
        b.transition("even", "b", "even", "0");
        b.transition("odd", "b", "odd", "1");
        b.build().unwrap()
    }

    #[test]
    fn step_and_partiality() {
        let m = two_state();
        let s = m.state("even").unwrap();
        let a = m.inputs().get("a").unwrap();
        let (d, o) = m.step(s, a).unwrap();
        assert_eq!(m.state_name(d), "odd");
        assert_eq!(m.outputs().name(o), "1");

        // undefined pair in a partial machine goes absent, not an error
        let inputs = Alphabet::new(["a", "b"]).unwrap();
        let outputs = Alphabet::new(["0"]).unwrap();
        let mut b = MealyBuilder::new(inputs, outputs, "q");
        b.transition("q", "a", "q", "0");
        let p = b.build().unwrap();
        let q = p.state("q").unwrap();
        assert_eq!(p.step(q, p.inputs().get("b").unwrap()), None);
    }

    #[test]
    fn step_named_rejects_unknown() {
        let m = two_state();
        assert!(matches!(
            m.step_named("even", "zzz"),
            Err(Error::UnknownSymbol(_))
        ));
        assert!(matches!(
            m.step_named("ghost", "a"),
            Err(Error::UnknownState(_))
        ));
    }

    #[test]
    fn run_empty_word() {
        let m = two_state();
        let (s, o) = m.run(&[]).unwrap();
        assert_eq!(s, m.initial());
        assert_eq!(o, None);
    }

    #[test]
    fn run_leaves_domain() {
        let inputs = Alphabet::new(["a"]).unwrap();
        let outputs = Alphabet::new(["0"]).unwrap();
        let m = MealyMachine::trivial(inputs, outputs, "q");
        let a = m.inputs().get("a").unwrap();
        assert_eq!(m.run(&[a]), None);
    }

    #[test]
    fn run_compositionality() {
        let m = two_state();
        let a = m.inputs().get("a").unwrap();
        let b = m.inputs().get("b").unwrap();
        let w = [a, b, a, a, b];
        let (u, v) = w.split_at(2);
        let (mid, _) = m.run(u).unwrap();
        let (full, _) = m.run(&w).unwrap();
        let (via, _) = m.run_from(mid, v).unwrap();
        assert_eq!(full, via);
    }

    #[test]
    fn nondeterministic_build_rejected() {
        let inputs = Alphabet::new(["a"]).unwrap();
        let outputs = Alphabet::new(["0", "1"]).unwrap();
        let mut b = MealyBuilder::new(inputs, outputs, "q");
        b.transition("q", "a", "q", "0");
        b.transition("q", "a", "q", "1");
        assert!(b.build().is_err());
    }

    #[test]
    fn isomorphism_ignores_names() {
        let m = two_state();
        let renamed = m.rename_states(|n| format!("x_{n}")).unwrap();
        assert!(m.isomorphic(&renamed));
        assert!(!m.isomorphic(&MealyMachine::trivial(
            m.inputs().clone(),
            m.outputs().clone(),
            "q"
        )));
    }
}
