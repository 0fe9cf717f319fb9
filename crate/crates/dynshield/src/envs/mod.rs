//! Benchmark simulators with observable environment actions.
//!
//! Each environment resolves its randomness into an explicit environment
//! action, so fixing the random stream makes a step a deterministic function
//! of state and controller action. That is the determinism assumption the
//! whole learning pipeline rests on, and it is what `replay determinism`
//! tests pin down.

mod cliffwalk;
mod gridworld;
mod taxi;
mod watertank;

pub use cliffwalk::CliffWalk;
pub use gridworld::GridWorld;
pub use taxi::Taxi;
pub use watertank::WaterTank;

use crate::alphabet::{Alphabet, Sym};
use crate::fsrs::Fsrs;
use crate::safety::SafetyAutomaton;
use crate::{Error, Result};

/// One executed step as the training loop and the trace store see it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    /// The resolved randomness, observable to the learner.
    pub env_action: Sym,
    /// The shield-visible abstraction of what happened.
    pub output: Sym,
    pub reward: f64,
    pub done: bool,
    /// True iff `output` drives the environment's specification out of its
    /// safe region on this step.
    pub undesired: bool,
    /// Discrete observation for the RL agent.
    pub rl_state: usize,
}

pub trait Environment {
    fn name(&self) -> &'static str;
    fn cont(&self) -> &Alphabet;
    fn env_actions(&self) -> &Alphabet;
    fn outputs(&self) -> &Alphabet;
    fn rl_state_count(&self) -> usize;
    fn max_ep_len(&self) -> u32;
    fn spec(&self) -> SafetyAutomaton;
    /// Starts an episode; the random stream is derived from the seed.
    fn reset(&mut self, seed: u64) -> usize;
    fn step(&mut self, action: Sym) -> EnvStep;
    /// The ground-truth reactive system, where the state space is tractable.
    fn truth(&self) -> Option<Fsrs> {
        None
    }
}

pub const ENV_NAMES: [&str; 4] = ["watertank", "gridworld", "cliffwalk", "taxi"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "watertank" => Ok(Box::new(WaterTank::new())),
        "gridworld" => Ok(Box::new(GridWorld::new())),
        "cliffwalk" => Ok(Box::new(CliffWalk::new())),
        "taxi" => Ok(Box::new(Taxi::new())),
        other => Err(Error::Invalid(format!(
            "unknown environment '{other}' (expected one of {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn random_episode(
        env: &mut dyn Environment,
        seed: u64,
        action_seed: u64,
    ) -> (Vec<EnvStep>, Vec<Sym>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(action_seed);
        env.reset(seed);
        let n_actions = env.cont().len() as u16;
        let mut steps = Vec::new();
        let mut actions = Vec::new();
        for _ in 0..env.max_ep_len() {
            let a = Sym(rng.gen_range(0..n_actions));
            let s = env.step(a);
            actions.push(a);
            steps.push(s);
            if s.done {
                break;
            }
        }
        (steps, actions)
    }

    #[test]
    fn replay_determinism_all_envs() {
        for name in ENV_NAMES {
            let mut env = make_env(name).unwrap();
            for seed in 0..5u64 {
                let (run1, acts) = random_episode(env.as_mut(), seed, seed ^ 0xabcd);
                env.reset(seed);
                let run2: Vec<EnvStep> = acts.iter().map(|&a| env.step(a)).collect();
                assert_eq!(run1, run2, "{name} seed {seed}");
            }
        }
    }

    #[test]
    fn undesired_flag_agrees_with_spec() {
        for name in ENV_NAMES {
            let mut env = make_env(name).unwrap();
            let spec = env.spec();
            for seed in 0..20u64 {
                let (steps, _) = random_episode(env.as_mut(), seed, seed.wrapping_mul(77));
                let word: Vec<Sym> = steps.iter().map(|s| s.output).collect();
                let any_undesired = steps.iter().any(|s| s.undesired);
                assert_eq!(
                    any_undesired,
                    !spec.accepts(&word),
                    "{name} seed {seed}: flags and spec disagree"
                );
                // per-step: an undesired step leaves the safe region there
                for (i, s) in steps.iter().enumerate() {
                    if s.undesired {
                        assert!(!spec.accepts(&word[..=i]), "{name} step {i}");
                    }
                }
            }
        }
    }

    #[test]
    fn specs_accept_the_empty_word() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            assert!(env.spec().accepts(&[]), "{name}");
        }
    }

    #[test]
    fn truth_machines_are_cont_total_and_match_alphabets() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            if let Some(truth) = env.truth() {
                assert!(truth.validate().is_empty(), "{name} truth not Cont-total");
                assert_eq!(truth.cont(), env.cont(), "{name}");
                assert_eq!(truth.env(), env.env_actions(), "{name}");
                assert_eq!(truth.outputs(), env.outputs(), "{name}");
            }
        }
    }

    /// Replaying an episode through the ground-truth machine reproduces the
    /// observed outputs: the env is an execution of its own truth.
    #[test]
    fn episodes_follow_the_truth_machine() {
        for name in ["watertank", "gridworld", "cliffwalk"] {
            let mut env = make_env(name).unwrap();
            let truth = env.truth().unwrap();
            for seed in 0..10u64 {
                env.reset(seed);
                let (steps, actions) = random_episode(env.as_mut(), seed, seed + 5);
                let mut state = truth.machine().initial();
                for (s, &a) in steps.iter().zip(&actions) {
                    let (next, out) = truth
                        .step(state, a, s.env_action)
                        .unwrap_or_else(|| panic!("{name}: truth undefined on executed step"));
                    assert_eq!(out, s.output, "{name} output mismatch");
                    state = next;
                }
            }
        }
    }
}
