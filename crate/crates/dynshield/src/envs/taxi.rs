//! The taxi grid: pick a passenger up at one location and drop them off at
//! another, without scratching the car. Barriers block some lateral moves;
//! each hit damages the taxi and risks breaking it outright. The episode's
//! passenger/destination draw is exposed as the first environment action,
//! and the shield-visible output carries the step event, the cell reached,
//! and whether the passenger is on board.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::alphabet::{Alphabet, Sym};
use crate::safety::SafetyAutomaton;

use super::{EnvStep, Environment};

const MAX_EP_LEN: u32 = 200;
/// Break probability grows by this per accumulated damage point.
const BREAK_STEP: f64 = 0.1;

/// Pickup/dropoff locations in map order: R, G, Y, B.
const LOCATIONS: [(i32, i32); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];
const LOC_NAMES: [char; 4] = ['r', 'g', 'y', 'b'];

/// Vertical barriers: a wall on the right side of each listed cell.
const WALLS_RIGHT: [(i32, i32); 6] = [(0, 1), (1, 1), (3, 0), (3, 2), (4, 0), (4, 2)];

const EVENTS: [&str; 7] = [
    "move", "wall", "break", "pickup", "dropoff", "badpick", "baddrop",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Passenger {
    AtLocation(usize),
    InTaxi,
}

pub struct Taxi {
    cont: Alphabet,
    env: Alphabet,
    out: Alphabet,
    rng: ChaCha8Rng,
    pos: (i32, i32),
    passenger: Passenger,
    dest: usize,
    source: usize,
    damage: u32,
    first_step: bool,
    steps: u32,
}

fn scenario_name(src: usize, dst: usize) -> String {
    format!("{}{}", LOC_NAMES[src], LOC_NAMES[dst])
}

fn out_name(event: &str, pos: (i32, i32), in_taxi: bool) -> String {
    if in_taxi {
        format!("{event}_{}{}_in", pos.0, pos.1)
    } else {
        format!("{event}_{}{}", pos.0, pos.1)
    }
}

impl Taxi {
    pub fn new() -> Self {
        let mut env_names: Vec<String> = vec!["ok".into(), "break".into()];
        for s in 0..4 {
            for d in 0..4 {
                if s != d {
                    env_names.push(scenario_name(s, d));
                }
            }
        }
        let mut out_names = Vec::new();
        for event in EVENTS {
            for r in 0..5 {
                for c in 0..5 {
                    out_names.push(out_name(event, (r, c), false));
                    out_names.push(out_name(event, (r, c), true));
                }
            }
        }
        Taxi {
            cont: Alphabet::new(["n", "s", "e", "w", "pickup", "dropoff"]).unwrap(),
            env: Alphabet::new(env_names).unwrap(),
            out: Alphabet::new(out_names).unwrap(),
            rng: ChaCha8Rng::seed_from_u64(0),
            pos: (2, 2),
            passenger: Passenger::AtLocation(0),
            dest: 1,
            source: 0,
            damage: 0,
            first_step: true,
            steps: 0,
        }
    }

    fn blocked(&self, from: (i32, i32), to: (i32, i32)) -> bool {
        if !(0..5).contains(&to.0) || !(0..5).contains(&to.1) {
            return true;
        }
        if from.0 == to.0 {
            let (l, r) = if from.1 < to.1 { (from, to) } else { (to, from) };
            if r.1 - l.1 == 1 && WALLS_RIGHT.contains(&l) {
                return true;
            }
        }
        false
    }

    fn rl_state(&self) -> usize {
        let pos = (self.pos.0 * 5 + self.pos.1) as usize;
        let pass = match self.passenger {
            Passenger::AtLocation(l) => l,
            Passenger::InTaxi => 4,
        };
        (pos * 5 + pass) * 4 + self.dest
    }

    fn finish(&mut self, env_action: Sym, event: &str, reward: f64, done: bool) -> EnvStep {
        self.steps += 1;
        let undesired = matches!(event, "wall" | "badpick" | "baddrop" | "break");
        let output = self
            .out
            .get(&out_name(
                event,
                self.pos,
                self.passenger == Passenger::InTaxi,
            ))
            .unwrap();
        EnvStep {
            env_action,
            output,
            reward,
            done: done || self.steps >= MAX_EP_LEN,
            undesired,
            rl_state: self.rl_state(),
        }
    }
}

impl Default for Taxi {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Taxi {
    fn name(&self) -> &'static str {
        "taxi"
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
        25 * 5 * 4
    }

    fn max_ep_len(&self) -> u32 {
        MAX_EP_LEN
    }

    fn spec(&self) -> SafetyAutomaton {
        let bad: Vec<&str> = self
            .out
            .names()
            .filter(|n| {
                n.starts_with("wall") || n.starts_with("badpick") || n.starts_with("baddrop")
                    || n.starts_with("break")
            })
            .collect();
        SafetyAutomaton::forbidding(self.out.clone(), &bad).unwrap()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = (2, 2);
        // the scenario is drawn at reset and revealed as the first env action
        self.source = self.rng.gen_range(0..4);
        self.dest = (self.source + self.rng.gen_range(1..4)) % 4;
        self.passenger = Passenger::AtLocation(self.source);
        self.damage = 0;
        self.first_step = true;
        self.steps = 0;
        self.rl_state()
    }

    fn step(&mut self, action: Sym) -> EnvStep {
        let scenario = self
            .env
            .get(&scenario_name(self.source, self.dest))
            .unwrap();
        let ok = self.env.get("ok").unwrap();
        let brk = self.env.get("break").unwrap();
        let first = std::mem::take(&mut self.first_step);
        let env_plain = if first { scenario } else { ok };

        match self.cont.name(action) {
            dir @ ("n" | "s" | "e" | "w") => {
                let d = match dir {
                    "n" => (-1, 0),
                    "s" => (1, 0),
                    "e" => (0, 1),
                    _ => (0, -1),
                };
                let target = (self.pos.0 + d.0, self.pos.1 + d.1);
                if self.blocked(self.pos, target) {
                    // the center start cannot hit on the very first step,
                    // so the break draw never races the scenario reveal
                    debug_assert!(!first);
                    self.damage += 1;
                    let p = (BREAK_STEP * self.damage as f64).min(1.0);
                    if self.rng.gen_bool(p) {
                        self.finish(brk, "break", -1.0, true)
                    } else {
                        self.finish(ok, "wall", -1.0, false)
                    }
                } else {
                    self.pos = target;
                    self.finish(env_plain, "move", -1.0, false)
                }
            }
            "pickup" => match self.passenger {
                Passenger::AtLocation(l) if LOCATIONS[l] == self.pos => {
                    self.passenger = Passenger::InTaxi;
                    self.finish(env_plain, "pickup", -1.0, false)
                }
                _ => self.finish(env_plain, "badpick", -10.0, false),
            },
            "dropoff" => match self.passenger {
                Passenger::InTaxi if LOCATIONS[self.dest] == self.pos => {
                    self.passenger = Passenger::AtLocation(self.dest);
                    self.finish(env_plain, "dropoff", 20.0, true)
                }
                _ => self.finish(env_plain, "baddrop", -10.0, false),
            },
            _ => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn go(t: &mut Taxi, dir: &str) -> EnvStep {
        let a = t.cont.get(dir).unwrap();
        t.step(a)
    }

    fn event(t: &Taxi, s: &EnvStep) -> String {
        let name = t.out.name(s.output);
        name.split('_').next().unwrap().to_string()
    }

    #[test]
    fn wrong_pickup_is_undesired_with_minus_ten() {
        let mut t = Taxi::new();
        t.reset(0);
        let s = go(&mut t, "pickup"); // center is never a location
        assert_eq!(event(&t, &s), "badpick");
        assert_eq!(t.out.name(s.output), "badpick_22");
        assert!(s.undesired && !s.done);
        assert_eq!(s.reward, -10.0);
    }

    #[test]
    fn correct_pickup_then_dropoff_pays_twenty() {
        let mut t = Taxi::new();
        t.reset(0);
        // force a known scenario: passenger at R=(0,0), destination G=(0,4)
        t.source = 0;
        t.dest = 1;
        t.passenger = Passenger::AtLocation(0);
        // drive to R: two west (row 2 has no barriers), two north
        for dir in ["w", "w", "n", "n"] {
            let s = go(&mut t, dir);
            assert_eq!(event(&t, &s), "move");
        }
        assert_eq!(t.pos, (0, 0));
        let s = go(&mut t, "pickup");
        assert_eq!(t.out.name(s.output), "pickup_00_in");
        assert_eq!(t.passenger, Passenger::InTaxi);
        // drive to G at (0,4): the (0,1)-(0,2) and (1,1)-(1,2) barriers
        // force a detour through row 2
        for dir in ["s", "s", "e", "e", "n", "n", "e", "e"] {
            let s = go(&mut t, dir);
            assert_eq!(event(&t, &s), "move", "at {:?}", t.pos);
            assert!(t.out.name(s.output).ends_with("_in"));
        }
        assert_eq!(t.pos, (0, 4));
        let s = go(&mut t, "dropoff");
        assert_eq!(t.out.name(s.output), "dropoff_04");
        assert_eq!(s.reward, 20.0);
        assert!(s.done && !s.undesired);
    }

    #[test]
    fn barrier_hit_damages_and_can_break() {
        let mut t = Taxi::new();
        t.reset(0);
        // move to (0,2) and ram the barrier on its left until it breaks;
        // with damage d the break chance is 0.1*d, so it must break by 10
        go(&mut t, "n");
        go(&mut t, "n");
        assert_eq!(t.pos, (0, 2));
        let mut broke = false;
        for _ in 0..50 {
            let s = go(&mut t, "w");
            let ev = event(&t, &s);
            assert!(ev == "wall" || ev == "break", "{ev}");
            assert_eq!(t.pos, (0, 2), "hit must stay in place");
            assert!(s.undesired);
            if ev == "break" {
                assert!(s.done);
                broke = true;
                break;
            }
        }
        assert!(broke, "damage accumulation must force a break");
        assert!(t.damage >= 1);
    }

    #[test]
    fn first_env_action_encodes_the_scenario() {
        let mut t = Taxi::new();
        t.reset(3);
        let expected = scenario_name(t.source, t.dest);
        let s = go(&mut t, "n");
        assert_eq!(t.env.name(s.env_action), expected);
        // later plain moves report ok
        let s = go(&mut t, "s");
        assert_eq!(t.env.name(s.env_action), "ok");
    }

    #[test]
    fn outputs_reveal_position() {
        let mut t = Taxi::new();
        t.reset(3);
        let s = go(&mut t, "n");
        assert_eq!(t.out.name(s.output), "move_12");
        let s = go(&mut t, "e");
        assert_eq!(t.out.name(s.output), "move_13");
    }

    #[test]
    fn scenario_pairs_are_distinct_locations() {
        let mut t = Taxi::new();
        for seed in 0..50 {
            t.reset(seed);
            assert_ne!(t.source, t.dest);
        }
    }

    #[test]
    fn wrong_dropoff_keeps_passenger() {
        let mut t = Taxi::new();
        t.reset(0);
        t.passenger = Passenger::InTaxi;
        t.dest = 1; // G, not the center
        let s = go(&mut t, "dropoff");
        assert_eq!(event(&t, &s), "baddrop");
        assert_eq!(t.passenger, Passenger::InTaxi);
        assert!(!s.done);
    }

    #[test]
    fn damage_counter_is_monotone() {
        let mut t = Taxi::new();
        t.reset(9);
        let mut last = 0;
        for _ in 0..100 {
            let s = go(&mut t, "w"); // eventually hits the border
            assert!(t.damage >= last);
            last = t.damage;
            if s.done {
                break;
            }
        }
    }
}
