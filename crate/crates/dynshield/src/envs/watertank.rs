//! A 100-liter tank. The controller opens or closes the inflow valve; the
//! environment resolves the actual in/outflow. Draining the tank, filling it
//! to the brim, or toggling the valve again within three steps of the last
//! change is undesired. The shield-visible output carries the action taken,
//! the status of the level reached, and the valve-violation flag.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::alphabet::{Alphabet, Sym};
use crate::fsrs::Fsrs;
use crate::mealy::MealyBuilder;
use crate::safety::SafetyAutomaton;

use super::{EnvStep, Environment};

const MAX_LEVEL: i32 = 100;
const MAX_EP_LEN: u32 = 200;
/// Minimum steps between valve position changes.
const VALVE_GAP: u8 = 3;

pub struct WaterTank {
    cont: Alphabet,
    env: Alphabet,
    out: Alphabet,
    rng: ChaCha8Rng,
    level: i32,
    /// Current valve position as a cont symbol.
    valve: Sym,
    /// Steps since the last valve change, saturating at `VALVE_GAP`.
    since_change: u8,
    steps: u32,
}

fn status(level: i32) -> &'static str {
    if level == 0 {
        "low"
    } else if level == MAX_LEVEL {
        "high"
    } else {
        "safe"
    }
}

fn out_name(action: &str, level: i32, violation: bool) -> String {
    format!(
        "{action}_{}_{}",
        status(level),
        if violation { "viol" } else { "ok" }
    )
}

impl WaterTank {
    pub fn new() -> Self {
        let cont = Alphabet::new(["open", "close"]).unwrap();
        let env = Alphabet::new(["i0o0", "i0o1", "i1o0", "i1o1", "i2o0", "i2o1"]).unwrap();
        let mut outs = Vec::new();
        for a in ["open", "close"] {
            for st in ["low", "safe", "high"] {
                for v in ["ok", "viol"] {
                    outs.push(format!("{a}_{st}_{v}"));
                }
            }
        }
        let out = Alphabet::new(outs).unwrap();
        let close = cont.get("close").unwrap();
        WaterTank {
            cont,
            env,
            out,
            rng: ChaCha8Rng::seed_from_u64(0),
            level: 50,
            valve: close,
            since_change: VALVE_GAP,
            steps: 0,
        }
    }

    fn rl_index(level: i32, valve_open: bool, since: u8) -> usize {
        ((level as usize * 2) + valve_open as usize) * (VALVE_GAP as usize + 1) + since as usize
    }

    fn rl_state(&self) -> usize {
        let open = self.cont.get("open").unwrap();
        Self::rl_index(self.level, self.valve == open, self.since_change)
    }

    /// The deterministic core: applies the action under a resolved inflow
    /// and outflow. Factored out so tests can force the environment's hand.
    fn apply(&mut self, action: Sym, inflow: i32, outflow: i32) -> EnvStep {
        let changed = action != self.valve;
        let violation = changed && self.since_change < VALVE_GAP;
        if changed {
            self.valve = action;
            self.since_change = 0;
        }
        self.level = (self.level + inflow - outflow).clamp(0, MAX_LEVEL);
        self.since_change = (self.since_change + 1).min(VALVE_GAP);
        self.steps += 1;

        let undesired = self.level == 0 || self.level == MAX_LEVEL || violation;
        let output = self
            .out
            .get(&out_name(self.cont.name(action), self.level, violation))
            .unwrap();
        let env_action = self.env.get(&format!("i{inflow}o{outflow}")).unwrap();
        EnvStep {
            env_action,
            output,
            reward: if undesired { -100.0 } else { 1.0 },
            done: undesired || self.steps >= MAX_EP_LEN,
            undesired,
            rl_state: self.rl_state(),
        }
    }
}

impl Default for WaterTank {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for WaterTank {
    fn name(&self) -> &'static str {
        "watertank"
    }

    fn cont(&self) -> &Alphabet {
        &self.cont
    }

    fn env_actions(&self) -> &Alphabet {
        &self.env
    }

    fn outputs(&self) -> &Alphabet {
        &self.out
    }

    fn rl_state_count(&self) -> usize {
        (MAX_LEVEL as usize + 1) * 2 * (VALVE_GAP as usize + 1)
    }

    fn max_ep_len(&self) -> u32 {
        MAX_EP_LEN
    }

    fn spec(&self) -> SafetyAutomaton {
        let bad: Vec<&str> = self
            .out
            .names()
            .filter(|n| !n.ends_with("_safe_ok"))
            .collect();
        SafetyAutomaton::forbidding(self.out.clone(), &bad).unwrap()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.level = 50;
        self.valve = self.cont.get("close").unwrap();
        self.since_change = VALVE_GAP;
        self.steps = 0;
        self.rl_state()
    }

    fn step(&mut self, action: Sym) -> EnvStep {
        let (inflow, outflow) = if self.cont.name(action) == "open" {
            (self.rng.gen_range(1..=2), self.rng.gen_range(0..=1))
        } else {
            (0, self.rng.gen_range(0..=1))
        };
        self.apply(action, inflow, outflow)
    }

    fn truth(&self) -> Option<Fsrs> {
        let name = |level: i32, open: bool, since: u8| {
            format!("l{level:03}{}{}", if open { 'o' } else { 'c' }, since)
        };
        let mut b = MealyBuilder::new(
            Alphabet::product(&self.cont, &self.env),
            self.out.clone(),
            name(50, false, VALVE_GAP),
        );
        for level in 0..=MAX_LEVEL {
            for open in [false, true] {
                for since in 0..=VALVE_GAP {
                    let src = name(level, open, since);
                    for (act, flows) in [
                        ("open", [(1, 0), (1, 1), (2, 0), (2, 1)].as_slice()),
                        ("close", [(0, 0), (0, 1)].as_slice()),
                    ] {
                        for &(inflow, outflow) in flows {
                            let changed = (act == "open") != open;
                            let violation = changed && since < VALVE_GAP;
                            let next_since = if changed {
                                1
                            } else {
                                (since + 1).min(VALVE_GAP)
                            };
                            let next_level = (level + inflow - outflow).clamp(0, MAX_LEVEL);
                            b.transition(
                                src.clone(),
                                format!("{act},i{inflow}o{outflow}"),
                                name(next_level, act == "open", next_since),
                                out_name(act, next_level, violation),
                            );
                        }
                    }
                }
            }
        }
        Some(Fsrs::new(b.build().unwrap(), self.cont.clone(), self.env.clone()).unwrap())
    }
}
