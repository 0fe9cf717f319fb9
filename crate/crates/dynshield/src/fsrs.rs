//! Finite-state reactive systems: Mealy machines over Cont x Env action
//! pairs, the strategies of the environment player, and the MDP a strategy
//! induces.

use std::collections::BTreeMap;

use crate::alphabet::{Alphabet, Sym};
use crate::mealy::{MealyMachine, StateId};
use crate::{Error, Result};

/// A Mealy machine whose input alphabet is the product of a controller
/// alphabet and an environment alphabet.
///
/// Cont-totality (every state offers each controller action under at least
/// one environment action) is a property of *complete* system models, not an
/// invariant of the type: learned models are legitimately partial, which is
/// exactly what the optimistic sink in the game composition absorbs. Use
/// [`validate`](Fsrs::validate) to check it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fsrs {
    machine: MealyMachine,
    cont: Alphabet,
    env: Alphabet,
}

impl Fsrs {
    /// Wraps a machine whose input alphabet must be `Alphabet::product(cont, env)`.
    pub fn new(machine: MealyMachine, cont: Alphabet, env: Alphabet) -> Result<Self> {
        let expect = Alphabet::product(&cont, &env);
        if machine.inputs() != &expect {
            return Err(Error::AlphabetMismatch(
                "machine input alphabet is not the Cont x Env product".into(),
            ));
        }
        Ok(Fsrs { machine, cont, env })
    }

    pub fn machine(&self) -> &MealyMachine {
        &self.machine
    }

    pub fn cont(&self) -> &Alphabet {
        &self.cont
    }

    pub fn env(&self) -> &Alphabet {
        &self.env
    }

    pub fn outputs(&self) -> &Alphabet {
        self.machine.outputs()
    }

    /// Encodes a (controller, environment) action pair as one input symbol.
    pub fn pair(&self, c: Sym, e: Sym) -> Sym {
        Sym((c.index() * self.env.len() + e.index()) as u16)
    }

    pub fn unpair(&self, a: Sym) -> (Sym, Sym) {
        let n = self.env.len();
        (Sym((a.index() / n) as u16), Sym((a.index() % n) as u16))
    }

    pub fn step(&self, s: StateId, c: Sym, e: Sym) -> Option<(StateId, Sym)> {
        self.machine.step(s, self.pair(c, e))
    }

    /// Cont-totality violations: every (state, controller action) pair with
    /// no defined transition for any environment action. Empty means the
    /// model is a complete reactive system.
    pub fn validate(&self) -> Vec<(StateId, Sym)> {
        let mut violations = Vec::new();
        for s in self.machine.state_ids() {
            for c in self.cont.syms() {
                let defined = self
                    .env
                    .syms()
                    .any(|e| self.machine.step(s, self.pair(c, e)).is_some());
                if !defined {
                    violations.push((s, c));
                }
            }
        }
        violations
    }
}

/// A memoryless environment strategy: a distribution over environment
/// actions for every (state, controller action) pair of some [`Fsrs`].
#[derive(Debug, Clone)]
pub struct EnvStrategy {
    choices: BTreeMap<(StateId, Sym), Vec<(Sym, f64)>>,
}

const MASS_TOL: f64 = 1e-9;

impl EnvStrategy {
    pub fn new() -> Self {
        EnvStrategy {
            choices: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, state: StateId, cont: Sym, dist: Vec<(Sym, f64)>) {
        self.choices.insert((state, cont), dist);
    }

    pub fn get(&self, state: StateId, cont: Sym) -> Option<&[(Sym, f64)]> {
        self.choices.get(&(state, cont)).map(|v| v.as_slice())
    }

    /// Checks the strategy against a model: the support of every choice must
    /// lie in the model's defined transitions, and every distribution must
    /// sum to one.
    pub fn validate(&self, model: &Fsrs) -> Result<()> {
        for (&(s, c), dist) in &self.choices {
            let mut mass = 0.0;
            for &(e, p) in dist {
                if p < 0.0 {
                    return Err(Error::Strategy("negative probability".into()));
                }
                if p > 0.0 && model.step(s, c, e).is_none() {
                    return Err(Error::Strategy(format!(
                        "support contains '{}' at state '{}' under '{}', where the model is undefined",
                        model.env().name(e),
                        model.machine().state_name(s),
                        model.cont().name(c),
                    )));
                }
                mass += p;
            }
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(Error::Strategy(format!(
                    "distribution mass {mass} is not 1"
                )));
            }
        }
        Ok(())
    }
}

impl Default for EnvStrategy {
    fn default() -> Self {
        Self::new()
    }
}

/// A Markov decision process over the controller alphabet: the canonical
/// object an [`Fsrs`] plus an [`EnvStrategy`] induces.
#[derive(Debug, Clone)]
pub struct Mdp {
    pub states: Vec<String>,
    pub initial: StateId,
    pub cont: Alphabet,
    pub outputs: Alphabet,
    /// `(state, controller action) -> [((successor, output), probability)]`
    pub trans: BTreeMap<(StateId, Sym), Vec<((StateId, Sym), f64)>>,
}

impl Mdp {
    /// Every distribution sums to one and has non-empty support.
    pub fn validate(&self) -> Result<()> {
        for (k, dist) in &self.trans {
            if dist.is_empty() {
                return Err(Error::Invalid(format!(
                    "empty distribution at {:?}",
                    k
                )));
            }
            let mass: f64 = dist.iter().map(|(_, p)| p).sum();
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(Error::Invalid(format!(
                    "distribution mass {mass} is not 1"
                )));
            }
        }
        Ok(())
    }
}

/// The canonical MDP of a model under a memoryless environment strategy:
/// the probability of `(successor, output)` under a controller action is the
/// strategy mass of the environment actions realizing exactly that pair.
pub fn induce_mdp(model: &Fsrs, tau: &EnvStrategy) -> Result<Mdp> {
    tau.validate(model)?;
    let mut trans: BTreeMap<(StateId, Sym), Vec<((StateId, Sym), f64)>> = BTreeMap::new();
    for (&(s, c), dist) in &tau.choices {
        let mut grouped: BTreeMap<(StateId, Sym), f64> = BTreeMap::new();
        for &(e, p) in dist {
            if p == 0.0 {
                continue;
            }
            let (succ, out) = model
                .step(s, c, e)
                .expect("validated support is defined in the model");
            *grouped.entry((succ, out)).or_insert(0.0) += p;
        }
        trans.insert((s, c), grouped.into_iter().collect());
    }
    let mdp = Mdp {
        states: model.machine().state_names().map(String::from).collect(),
        initial: model.machine().initial(),
        cont: model.cont().clone(),
        outputs: model.outputs().clone(),
        trans,
    };
    mdp.validate()?;
    Ok(mdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mealy::MealyBuilder;

    /// The pure water-level model: states are levels 0..=100, controller
    /// opens or closes the valve, the environment resolves in/outflow, and
    /// the output reports the status of the level reached.
    pub fn watertank_level_model() -> Fsrs {
        let cont = Alphabet::new(["open", "close"]).unwrap();
        let env = Alphabet::new(["i0o0", "i0o1", "i1o0", "i1o1", "i2o0", "i2o1"]).unwrap();
        let outputs = Alphabet::new(["low", "safe", "high"]).unwrap();
        let inputs = Alphabet::product(&cont, &env);
        let mut b = MealyBuilder::new(inputs, outputs, "l050");
        let status = |l: i32| {
            if l == 0 {
                "low"
            } else if l == 100 {
                "high"
            } else {
                "safe"
            }
        };
        for l in 0..=100i32 {
            for (c, n_ok) in [("open", [1, 2].as_slice()), ("close", [0].as_slice())] {
                for &n in n_ok {
                    for m in 0..=1i32 {
                        let next = (l + n - m).clamp(0, 100);
                        b.transition(
                            format!("l{l:03}"),
                            format!("{c},i{n}o{m}"),
                            format!("l{next:03}"),
                            status(next),
                        );
                    }
                }
            }
        }
        let machine = b.build().unwrap();
        Fsrs::new(machine, cont, env).unwrap()
    }

    #[test]
    fn watertank_step_examples() {
        let m = watertank_level_model();
        let mm = m.machine();
        let s50 = mm.state("l050").unwrap();
        let open = m.cont().get("open").unwrap();
        let close = m.cont().get("close").unwrap();
        let i2o1 = m.env().get("i2o1").unwrap();
        let i0o1 = m.env().get("i0o1").unwrap();

        let (d, o) = m.step(s50, open, i2o1).unwrap();
        assert_eq!(mm.state_name(d), "l051");
        assert_eq!(mm.outputs().name(o), "safe");

        let s1 = mm.state("l001").unwrap();
        let (d, o) = m.step(s1, close, i0o1).unwrap();
        assert_eq!(mm.state_name(d), "l000");
        assert_eq!(mm.outputs().name(o), "low");

        // close with inflow 2 is not an available environment response
        assert_eq!(m.step(s50, close, i2o1), None);
    }

    #[test]
    fn watertank_run_example() {
        let m = watertank_level_model();
        let open = m.cont().get("open").unwrap();
        let i2o0 = m.env().get("i2o0").unwrap();
        let i1o1 = m.env().get("i1o1").unwrap();
        // 50 -> 52 -> 52
        let w = vec![m.pair(open, i2o0), m.pair(open, i1o1)];
        let (s, o) = m.machine().run(&w).unwrap();
        assert_eq!(m.machine().state_name(s), "l052");
        assert_eq!(m.outputs().name(o.unwrap()), "safe");
    }

    #[test]
    fn watertank_is_cont_total() {
        let m = watertank_level_model();
        assert!(m.validate().is_empty());
    }

    #[test]
    fn missing_cont_action_reported() {
        let cont = Alphabet::new(["open", "close"]).unwrap();
        let env = Alphabet::new(["e"]).unwrap();
        let outputs = Alphabet::new(["x"]).unwrap();
        let inputs = Alphabet::product(&cont, &env);
        let mut b = MealyBuilder::new(inputs, outputs, "q");
        b.transition("q", "open,e", "q", "x");
        let m = Fsrs::new(b.build().unwrap(), cont.clone(), env).unwrap();
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(m.cont().name(v[0].1), "close");
    }

    #[test]
    fn empty_machine_violates_everywhere() {
        let cont = Alphabet::new(["a", "b"]).unwrap();
        let env = Alphabet::new(["e"]).unwrap();
        let outputs = Alphabet::new(["x"]).unwrap();
        let machine =
            MealyMachine::trivial(Alphabet::product(&cont, &env), outputs, "q");
        let m = Fsrs::new(machine, cont, env).unwrap();
        assert_eq!(m.validate().len(), 2);
    }

    #[test]
    fn induced_mdp_watertank() {
        let m = watertank_level_model();
        let mut tau = EnvStrategy::new();
        let open = m.cont().get("open").unwrap();
        let close = m.cont().get("close").unwrap();
        for s in m.machine().state_ids() {
            tau.set(
                s,
                open,
                ["i1o0", "i1o1", "i2o0", "i2o1"]
                    .iter()
                    .map(|e| (m.env().get(e).unwrap(), 0.25))
                    .collect(),
            );
            tau.set(
                s,
                close,
                ["i0o0", "i0o1"]
                    .iter()
                    .map(|e| (m.env().get(e).unwrap(), 0.5))
                    .collect(),
            );
        }
        let mdp = induce_mdp(&m, &tau).unwrap();
        let s50 = m.machine().state("l050").unwrap();
        let dist = &mdp.trans[&(s50, open)];
        let safe = m.outputs().get("safe").unwrap();
        let by_level: Vec<(String, Sym, f64)> = dist
            .iter()
            .map(|&((d, o), p)| (m.machine().state_name(d).to_string(), o, p))
            .collect();
        // outcomes: 52 w.p. 0.25 (i2o0), 51 w.p. 0.5 (i2o1 + i1o0), 50 w.p. 0.25 (i1o1)
        assert_eq!(
            by_level,
            vec![
                ("l050".to_string(), safe, 0.25),
                ("l051".to_string(), safe, 0.5),
                ("l052".to_string(), safe, 0.25),
            ]
        );
    }

    #[test]
    fn induced_mdp_point_distribution() {
        let m = watertank_level_model();
        let mut tau = EnvStrategy::new();
        let open = m.cont().get("open").unwrap();
        let s50 = m.machine().state("l050").unwrap();
        tau.set(s50, open, vec![(m.env().get("i2o0").unwrap(), 1.0)]);
        let mdp = induce_mdp(&m, &tau).unwrap();
        let dist = &mdp.trans[&(s50, open)];
        assert_eq!(dist.len(), 1);
        assert_eq!(dist[0].1, 1.0);
    }

    #[test]
    fn induced_mdp_low_absorbing_concentrates() {
        let m = watertank_level_model();
        let mut tau = EnvStrategy::new();
        let close = m.cont().get("close").unwrap();
        let s0 = m.machine().state("l000").unwrap();
        tau.set(
            s0,
            close,
            vec![
                (m.env().get("i0o0").unwrap(), 0.5),
                (m.env().get("i0o1").unwrap(), 0.5),
            ],
        );
        let mdp = induce_mdp(&m, &tau).unwrap();
        let dist = &mdp.trans[&(s0, close)];
        let low = m.outputs().get("low").unwrap();
        // both outflows leave the level at 0, so all mass lands on (l000, low)
        assert_eq!(dist.len(), 1);
        assert_eq!(dist[0], ((s0, low), 1.0));
    }

    #[test]
    fn strategy_support_outside_model_rejected() {
        let m = watertank_level_model();
        let mut tau = EnvStrategy::new();
        let close = m.cont().get("close").unwrap();
        let s50 = m.machine().state("l050").unwrap();
        tau.set(s50, close, vec![(m.env().get("i2o1").unwrap(), 1.0)]);
        assert!(matches!(induce_mdp(&m, &tau), Err(Error::Strategy(_))));
    }

    #[test]
    fn induced_mdp_mass_conservation() {
        let m = watertank_level_model();
        let mut tau = EnvStrategy::new();
        let open = m.cont().get("open").unwrap();
        let close = m.cont().get("close").unwrap();
        for s in m.machine().state_ids() {
            tau.set(
                s,
                open,
                vec![
                    (m.env().get("i1o0").unwrap(), 0.125),
                    (m.env().get("i1o1").unwrap(), 0.375),
                    (m.env().get("i2o0").unwrap(), 0.25),
                    (m.env().get("i2o1").unwrap(), 0.25),
                ],
            );
            tau.set(
                s,
                close,
                vec![
                    (m.env().get("i0o0").unwrap(), 0.75),
                    (m.env().get("i0o1").unwrap(), 0.25),
                ],
            );
        }
        let mdp = induce_mdp(&m, &tau).unwrap();
        for dist in mdp.trans.values() {
            let mass: f64 = dist.iter().map(|(_, p)| p).sum();
            assert!((mass - 1.0).abs() <= 1e-9);
        }
    }
}
