//! Two robots in a walled grid arena. The ego robot seeks the goal; the
//! adversary robot performs a random walk whose moves are the environment
//! actions. Walking into a wall or ending a step on the adversary's cell is
//! undesired.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::alphabet::{Alphabet, Sym};
use crate::fsrs::Fsrs;
use crate::mealy::MealyBuilder;
use crate::safety::SafetyAutomaton;

use super::{EnvStep, Environment};

/// 7x7 arena with outer walls: S ego start, G goal, E adversary start.
const MAP: [&str; 7] = [
    "xxxxxxx",
    "x    Ex",
    "x xxx x",
    "x xG  x",
    "x xxx x",
    "xS    x",
    "xxxxxxx",
];

const MAX_EP_LEN: u32 = 100;

pub struct GridWorld {
    cont: Alphabet,
    env: Alphabet,
    out: Alphabet,
    free: Vec<(i32, i32)>,
    cell_index: Vec<Vec<Option<usize>>>,
    ego_start: (i32, i32),
    adv_start: (i32, i32),
    goal: (i32, i32),
    rng: ChaCha8Rng,
    ego: (i32, i32),
    adv: (i32, i32),
    steps: u32,
}

fn delta(dir: &str) -> (i32, i32) {
    match dir {
        "n" => (-1, 0),
        "s" => (1, 0),
        "e" => (0, 1),
        "w" => (0, -1),
        "stay" => (0, 0),
        _ => unreachable!(),
    }
}

const ADV_MOVES: [&str; 5] = ["e", "n", "s", "w", "stay"];

impl GridWorld {
    pub fn new() -> Self {
        let mut free = Vec::new();
        let mut ego_start = (0, 0);
        let mut adv_start = (0, 0);
        let mut goal = (0, 0);
        let mut cell_index = vec![vec![None; 7]; 7];
        for (r, row) in MAP.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                let p = (r as i32, c as i32);
                match ch {
                    'x' => continue,
                    'S' => ego_start = p,
                    'G' => goal = p,
                    'E' => adv_start = p,
                    ' ' => {}
                    _ => unreachable!(),
                }
                cell_index[r][c] = Some(free.len());
                free.push(p);
            }
        }
        GridWorld {
            cont: Alphabet::new(["n", "s", "e", "w"]).unwrap(),
            env: Alphabet::new(ADV_MOVES).unwrap(),
            out: Alphabet::new(["move", "wall", "crash", "goal"]).unwrap(),
            free,
            cell_index,
            ego_start,
            adv_start,
            goal,
            rng: ChaCha8Rng::seed_from_u64(0),
            ego: ego_start,
            adv: adv_start,
            steps: 0,
        }
    }

    fn is_wall(&self, p: (i32, i32)) -> bool {
        !(0..7).contains(&p.0)
            || !(0..7).contains(&p.1)
            || self.cell_index[p.0 as usize][p.1 as usize].is_none()
    }

    fn cell(&self, p: (i32, i32)) -> usize {
        self.cell_index[p.0 as usize][p.1 as usize].unwrap()
    }

    fn rl_index(&self, ego: (i32, i32), adv: (i32, i32)) -> usize {
        self.cell(ego) * self.free.len() + self.cell(adv)
    }

    /// The adversary's legal moves from `adv`: stay plus every direction
    /// that does not enter a wall.
    fn adv_moves(&self, adv: (i32, i32)) -> Vec<Sym> {
        ADV_MOVES
            .iter()
            .filter(|dir| {
                let d = delta(dir);
                !self.is_wall((adv.0 + d.0, adv.1 + d.1))
            })
            .map(|dir| self.env.get(dir).unwrap())
            .collect()
    }

    /// Deterministic core: both robots move, walls refuse the ego in place,
    /// same-cell occupancy after the moves is a crash.
    fn outcome(
        &self,
        ego: (i32, i32),
        adv: (i32, i32),
        action: &str,
        adv_move: &str,
    ) -> ((i32, i32), (i32, i32), &'static str) {
        let ad = delta(adv_move);
        let adv_next = (adv.0 + ad.0, adv.1 + ad.1);
        let ed = delta(action);
        let ego_target = (ego.0 + ed.0, ego.1 + ed.1);
        if self.is_wall(ego_target) {
            return (ego, adv_next, "wall");
        }
        if ego_target == adv_next {
            return (ego_target, adv_next, "crash");
        }
        if ego_target == self.goal {
            return (ego_target, adv_next, "goal");
        }
        (ego_target, adv_next, "move")
    }
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for GridWorld {
    fn name(&self) -> &'static str {
        "gridworld"
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
        self.free.len() * self.free.len()
    }

    fn max_ep_len(&self) -> u32 {
        MAX_EP_LEN
    }

    fn spec(&self) -> SafetyAutomaton {
        SafetyAutomaton::forbidding(self.out.clone(), &["wall", "crash"]).unwrap()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.ego = self.ego_start;
        self.adv = self.adv_start;
        self.steps = 0;
        self.rl_index(self.ego, self.adv)
    }

    fn step(&mut self, action: Sym) -> EnvStep {
        let moves = self.adv_moves(self.adv);
        let env_action = moves[self.rng.gen_range(0..moves.len())];
        let (ego, adv, out) = self.outcome(
            self.ego,
            self.adv,
            self.cont.name(action),
            self.env.name(env_action),
        );
        self.ego = ego;
        self.adv = adv;
        self.steps += 1;
        let undesired = matches!(out, "wall" | "crash");
        let done = undesired || out == "goal" || self.steps >= MAX_EP_LEN;
        let reward = match out {
            "goal" => 1.0,
            "wall" | "crash" => -1.0,
            _ => -0.01,
        };
        EnvStep {
            env_action,
            output: self.out.get(out).unwrap(),
            reward,
            done,
            undesired,
            rl_state: self.rl_index(self.ego, self.adv),
        }
    }

    fn truth(&self) -> Option<Fsrs> {
        let name = |ego: (i32, i32), adv: (i32, i32)| {
            format!("e{}{}a{}{}", ego.0, ego.1, adv.0, adv.1)
        };
        let mut b = MealyBuilder::new(
            Alphabet::product(&self.cont, &self.env),
            self.out.clone(),
            name(self.ego_start, self.adv_start),
        );
        for &ego in &self.free {
            for &adv in &self.free {
                for action in ["n", "s", "e", "w"] {
                    for adv_move in ADV_MOVES {
                        let d = delta(adv_move);
                        if self.is_wall((adv.0 + d.0, adv.1 + d.1)) {
                            continue; // the adversary never picks wall moves
                        }
                        let (ego2, adv2, out) = self.outcome(ego, adv, action, adv_move);
                        b.transition(
                            name(ego, adv),
                            format!("{action},{adv_move}"),
                            name(ego2, adv2),
                            out,
                        );
                    }
                }
            }
        }
        Some(Fsrs::new(b.build().unwrap(), self.cont.clone(), self.env.clone()).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arena_has_18_free_cells() {
        let g = GridWorld::new();
        assert_eq!(g.free.len(), 18);
        assert_eq!(g.rl_state_count(), 324);
    }

    #[test]
    fn walking_into_the_boundary_is_undesired_and_stays() {
        let g = GridWorld::new();
        // ego start is (5,1); south is the outer wall
        let (ego, _, out) = g.outcome(g.ego_start, g.adv_start, "s", "stay");
        assert_eq!(out, "wall");
        assert_eq!(ego, g.ego_start);
    }

    #[test]
    fn reaching_the_goal_rewards_and_ends() {
        let mut g = GridWorld::new();
        g.reset(0);
        g.ego = (3, 4); // right of the goal
        g.adv = (1, 1); // far away
        let w = g.cont.get("w").unwrap();
        let s = g.step(w);
        assert_eq!(g.out.name(s.output), "goal");
        assert_eq!(s.reward, 1.0);
        assert!(s.done && !s.undesired);
    }

    #[test]
    fn same_cell_after_both_moves_is_a_crash_but_swaps_are_legal() {
        let g = GridWorld::new();
        // adjacent robots moving onto the same cell crash
        let (_, _, out) = g.outcome((5, 2), (5, 4), "e", "w");
        assert_eq!(out, "crash");
        // pass-through swap is legal under the same-cell rule
        let (ego, adv, out) = g.outcome((5, 2), (5, 3), "e", "w");
        assert_eq!(out, "move");
        assert_eq!((ego, adv), ((5, 3), (5, 2)));
    }

    #[test]
    fn adversary_only_takes_legal_moves() {
        let mut g = GridWorld::new();
        g.reset(7);
        for _ in 0..500 {
            let before = g.adv;
            let moves = g.adv_moves(before);
            assert!(!moves.is_empty());
            let a = g.cont.get("n").unwrap();
            let s = g.step(a);
            assert!(moves.contains(&s.env_action));
            assert!(!g.is_wall(g.adv));
            if s.done {
                g.reset(8);
            }
        }
    }

    #[test]
    fn positions_stay_inside_the_arena() {
        let mut g = GridWorld::new();
        g.reset(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let a = Sym(rng.gen_range(0..4));
            let s = g.step(a);
            assert!(!g.is_wall(g.ego));
            assert!(!g.is_wall(g.adv));
            if s.done {
                g.reset(rng.gen());
            }
        }
    }
}
