//! The 3x13 cliff-walking grid. Start bottom-left, goal bottom-right, the
//! cliff spans the eleven cells between them. The environment has no
//! randomness, so its action alphabet is a singleton.

use crate::alphabet::{Alphabet, Sym};
use crate::fsrs::Fsrs;
use crate::mealy::MealyBuilder;
use crate::safety::SafetyAutomaton;

use super::{EnvStep, Environment};

const ROWS: i32 = 3;
const COLS: i32 = 13;
const MAX_EP_LEN: u32 = 100;

pub struct CliffWalk {
    cont: Alphabet,
    env: Alphabet,
    out: Alphabet,
    pos: (i32, i32),
    steps: u32,
}

fn is_cliff(p: (i32, i32)) -> bool {
    p.0 == 2 && (1..=11).contains(&p.1)
}

fn is_goal(p: (i32, i32)) -> bool {
    p == (2, 12)
}

fn delta(dir: &str) -> (i32, i32) {
    match dir {
        "n" => (-1, 0),
        "s" => (1, 0),
        "e" => (0, 1),
        "w" => (0, -1),
        _ => unreachable!(),
    }
}

fn in_grid(p: (i32, i32)) -> bool {
    (0..ROWS).contains(&p.0) && (0..COLS).contains(&p.1)
}

impl CliffWalk {
    pub fn new() -> Self {
        CliffWalk {
            cont: Alphabet::new(["n", "s", "e", "w"]).unwrap(),
            env: Alphabet::new(["u"]).unwrap(),
            out: Alphabet::new(["move", "cliff", "goal"]).unwrap(),
            pos: (2, 0),
            steps: 0,
        }
    }

    fn index(p: (i32, i32)) -> usize {
        (p.0 * COLS + p.1) as usize
    }

    /// Outcome of one move from `pos`: (new position, output name).
    fn resolve(pos: (i32, i32), dir: &str) -> ((i32, i32), &'static str) {
        let d = delta(dir);
        let target = (pos.0 + d.0, pos.1 + d.1);
        if !in_grid(target) {
            (pos, "move") // border moves are refused in place
        } else if is_cliff(target) {
            (target, "cliff")
        } else if is_goal(target) {
            (target, "goal")
        } else {
            (target, "move")
        }
    }
}

impl Default for CliffWalk {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CliffWalk {
    fn name(&self) -> &'static str {
        "cliffwalk"
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
        (ROWS * COLS) as usize
    }

    fn max_ep_len(&self) -> u32 {
        MAX_EP_LEN
    }

    fn spec(&self) -> SafetyAutomaton {
        SafetyAutomaton::forbidding(self.out.clone(), &["cliff"]).unwrap()
    }

    fn reset(&mut self, _seed: u64) -> usize {
        self.pos = (2, 0);
        self.steps = 0;
        Self::index(self.pos)
    }

    fn step(&mut self, action: Sym) -> EnvStep {
        let (next, out) = Self::resolve(self.pos, self.cont.name(action));
        self.pos = next;
        self.steps += 1;
        let undesired = out == "cliff";
        let done = undesired || out == "goal" || self.steps >= MAX_EP_LEN;
        let reward = match out {
            "cliff" => -100.0,
            "goal" => 0.0,
            _ => -1.0,
        };
        EnvStep {
            env_action: Sym(0),
            output: self.out.get(out).unwrap(),
            reward,
            done,
            undesired,
            rl_state: Self::index(self.pos),
        }
    }

    fn truth(&self) -> Option<Fsrs> {
        let name = |p: (i32, i32)| format!("r{}c{:02}", p.0, p.1);
        let mut b = MealyBuilder::new(
            Alphabet::product(&self.cont, &self.env),
            self.out.clone(),
            name((2, 0)),
        );
        for r in 0..ROWS {
            for c in 0..COLS {
                let p = (r, c);
                for dir in ["n", "s", "e", "w"] {
                    let (next, out) = if is_cliff(p) {
                        (p, "cliff") // absorbing once fallen
                    } else if is_goal(p) {
                        (p, "goal")
                    } else {
                        Self::resolve(p, dir)
                    };
                    b.transition(name(p), format!("{dir},u"), name(next), out);
                }
            }
        }
        Some(Fsrs::new(b.build().unwrap(), self.cont.clone(), self.env.clone()).unwrap())
    }
}
