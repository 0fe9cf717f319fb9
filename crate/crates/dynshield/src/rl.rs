//! Tabular Q-learning with pluggable action masking, plus the evaluation
//! protocol: greedy rollouts every few thousand steps, keeping the best
//! controller seen.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::alphabet::Sym;
use crate::dynamic::{DynamicShield, RebuildPolicy};
use crate::envs::Environment;
use crate::format::TraceFile;
use crate::fsrs::Fsrs;
use crate::game::PreemptiveShield;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Shielded,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "plain" => Ok(Mode::Plain),
            "shielded" => Ok(Mode::Shielded),
            other => Err(Error::Invalid(format!(
                "unknown mode '{other}' (expected plain or shielded)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Shielded => "shielded",
        }
    }
}

/// Dense state-action value table with per-entry update counts.
#[derive(Debug, Clone)]
pub struct QTable {
    values: Vec<f64>,
    visits: Vec<u32>,
    n_actions: usize,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, init: f64, alpha: f64, gamma: f64) -> Self {
        QTable {
            values: vec![init; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
            n_actions,
            alpha,
            gamma,
        }
    }

    pub fn get(&self, s: usize, a: Sym) -> f64 {
        self.values[s * self.n_actions + a.index()]
    }

    pub fn visited(&self, s: usize, a: Sym) -> bool {
        self.visits[s * self.n_actions + a.index()] > 0
    }

    fn set(&mut self, s: usize, a: Sym, v: f64) {
        let i = s * self.n_actions + a.index();
        self.values[i] = v;
        self.visits[i] += 1;
    }

    /// Greedy value over a restricted action set; ties go to the smallest
    /// action index.
    pub fn max_over(&self, s: usize, allowed: &[Sym]) -> f64 {
        allowed
            .iter()
            .map(|&a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax_over(&self, s: usize, allowed: &[Sym]) -> Sym {
        let mut best = allowed[0];
        let mut best_v = self.get(s, best);
        for &a in &allowed[1..] {
            let v = self.get(s, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    /// The greedy controller: ranks only actions that have been updated at
    /// least once, because actions censored during training carry no usable
    /// estimate; with no data at all, falls back to the full ranking.
    pub fn greedy(&self, s: usize, actions: &[Sym]) -> Sym {
        let mut best: Option<(Sym, f64)> = None;
        for &a in actions {
            if !self.visited(s, a) {
                continue;
            }
            let v = self.get(s, a);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((a, v));
            }
        }
        match best {
            Some((a, _)) => a,
            None => self.argmax_over(s, actions),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One temporal-difference backup. The bootstrap maximizes over
/// `allowed_next` so the learned values match the policy that is actually
/// executable under the mask; on terminal steps the bootstrap is zero.
pub fn q_update(
    q: &mut QTable,
    s: usize,
    a: Sym,
    r: f64,
    s_next: usize,
    terminal: bool,
    allowed_next: &[Sym],
) {
    let bootstrap = if terminal {
        0.0
    } else {
        q.gamma * q.max_over(s_next, allowed_next)
    };
    let old = q.get(s, a);
    q.set(s, a, old + q.alpha * (r + bootstrap - old));
}

/// Epsilon-greedy over the allowed set. Ties in the greedy branch break
/// toward the shortlex-smallest action, which is the smallest symbol index.
pub fn select_action(
    q: &QTable,
    s: usize,
    allowed: &[Sym],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Sym {
    debug_assert!(!allowed.is_empty());
    if rng.gen::<f64>() < epsilon {
        allowed[rng.gen_range(0..allowed.len())]
    } else {
        q.argmax_over(s, allowed)
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: u32,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the step budget over which epsilon decays linearly.
    pub epsilon_decay_frac: f64,
    /// Initial Q value.
    pub q_init: f64,
    /// Use the masked max in the backup target (the executable-policy
    /// variant); turning this off masks at selection only.
    pub masked_backup: bool,
    /// Evaluate under the shield mask instead of the raw controller.
    pub shielded_eval: bool,
    pub policy: RebuildPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 50_000,
            eval_interval: 5_000,
            eval_episodes: 30,
            alpha: 0.1,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_frac: 0.5,
            q_init: 0.0,
            masked_backup: true,
            shielded_eval: false,
            policy: RebuildPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 || self.eval_interval == 0 {
            return Err(Error::Invalid(
                "total_steps and eval_interval must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || !(0.0..1.0).contains(&self.gamma)
            || !(self.alpha > 0.0 && self.alpha <= 1.0)
        {
            return Err(Error::Invalid("hyperparameters out of range".into()));
        }
        self.policy.validate()
    }

    fn epsilon(&self, step: u64) -> f64 {
        let horizon = (self.total_steps as f64 * self.epsilon_decay_frac).max(1.0);
        let t = (step as f64 / horizon).min(1.0);
        self.epsilon_start + t * (self.epsilon_end - self.epsilon_start)
    }
}

/// One row of the metrics CSV: a training episode, with evaluation columns
/// filled on the rows where an evaluation ran.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: u64,
    pub steps_cum: u64,
    pub reward: f64,
    pub undesired: bool,
    pub undesired_cum: u64,
    pub shield_states: usize,
    pub rebuild_count: u32,
    pub rebuild_time_ms: u64,
    pub eval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestController {
    pub mean_reward: f64,
    pub safe_rate: f64,
    pub at_step: u64,
}

/// Everything a training run produces.
pub struct Metrics {
    pub seed: u64,
    pub mode: Mode,
    pub rows: Vec<MetricsRow>,
    pub undesired_episodes: u64,
    pub best: Option<BestController>,
    /// The latest learned model (shielded mode only).
    pub final_model: Option<Fsrs>,
    pub traces: Option<TraceFile>,
    pub fallback_queries: u64,
}

pub const METRICS_HEADER: &str = "seed,episode,steps_cum,reward,undesired_flag,undesired_cum,shield_states,rebuild_count,rebuild_time_ms,eval_mean_reward,eval_safe_rate";

impl Metrics {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.rows {
            let (em, es) = match r.eval {
                Some((m, sr)) => (format!("{m}"), format!("{sr}")),
                None => (String::new(), String::new()),
            };
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                self.seed,
                r.episode,
                r.steps_cum,
                r.reward,
                r.undesired as u8,
                r.undesired_cum,
                r.shield_states,
                r.rebuild_count,
                r.rebuild_time_ms,
                em,
                es
            ));
        }
        s
    }
}

/// Splitmix-style mixing for deriving independent substreams from one seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Greedy evaluation over fresh episodes: mean reward and the fraction of
/// episodes without a single undesired step. Runs the raw controller unless
/// a shield is passed in.
pub fn evaluate(
    q: &QTable,
    env: &mut dyn Environment,
    episodes: u32,
    seed_base: u64,
    shield: Option<&PreemptiveShield>,
) -> (f64, f64) {
    let all: Vec<Sym> = env.cont().syms().collect();
    let mut total = 0.0;
    let mut safe = 0u32;
    let mut cursor = shield.cloned();
    for ep in 0..episodes {
        let mut s = env.reset(mix_seed(seed_base, ep as u64));
        if let Some(c) = cursor.as_mut() {
            c.reset();
        }
        let mut undesired = false;
        for _ in 0..env.max_ep_len() {
            let a = match cursor.as_mut() {
                Some(c) => q.greedy(s, c.allowed_actions()),
                None => q.greedy(s, &all),
            };
            let step = env.step(a);
            if let Some(c) = cursor.as_mut() {
                c.advance(a, step.env_action, step.output);
            }
            total += step.reward;
            undesired |= step.undesired;
            s = step.rl_state;
            if step.done {
                break;
            }
        }
        if !undesired {
            safe += 1;
        }
    }
    (total / episodes as f64, safe as f64 / episodes as f64)
}

/// Runs episodes until the step budget is exhausted. In shielded mode the
/// dynamic handle supplies allowed sets, records every step, and rebuilds at
/// episode boundaries per its policy. Identical seed and config give
/// identical metrics apart from measured rebuild times.
pub fn train(
    env: &mut dyn Environment,
    mode: Mode,
    config: &TrainConfig,
    seed: u64,
) -> Result<Metrics> {
    config.validate()?;
    let all: Vec<Sym> = env.cont().syms().collect();
    let mut q = QTable::new(
        env.rl_state_count(),
        env.cont().len(),
        config.q_init,
        config.alpha,
        config.gamma,
    );
    let mut dynamic = match mode {
        Mode::Plain => None,
        Mode::Shielded => Some(DynamicShield::new(
            env.cont().clone(),
            env.env_actions().clone(),
            env.outputs().clone(),
            env.spec(),
            config.policy,
            env.max_ep_len(),
        )?),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
    let mut rows = Vec::new();
    let mut steps_cum = 0u64;
    let mut episode = 0u64;
    let mut undesired_cum = 0u64;
    let mut next_eval = config.eval_interval;
    let mut eval_index = 0u64;
    let mut best: Option<BestController> = None;
    let mut last_rebuild_ms = 0u64;

    while steps_cum < config.total_steps {
        let mut s = env.reset(mix_seed(seed, 2 + episode));
        if let Some(d) = dynamic.as_mut() {
            d.on_episode_start()?;
        }
        let mut ep_reward = 0.0;
        let mut ep_undesired = false;
        loop {
            let eps = config.epsilon(steps_cum);
            let a = match dynamic.as_mut() {
                Some(d) => {
                    let allowed = d.current_allowed();
                    select_action(&q, s, allowed, eps, &mut rng)
                }
                None => select_action(&q, s, &all, eps, &mut rng),
            };
            // shield containment: the executed action must have been allowed
            if let Some(d) = dynamic.as_mut() {
                assert!(
                    d.current_allowed().contains(&a),
                    "executed action was not in the allowed set"
                );
            }
            let step = env.step(a);
            steps_cum += 1;
            if let Some(d) = dynamic.as_mut() {
                d.advance(a, step.env_action, step.output)?;
            }
            let allowed_next: &[Sym] = match dynamic.as_mut() {
                Some(d) if config.masked_backup && !step.done => d.current_allowed(),
                _ => &all,
            };
            q_update(
                &mut q,
                s,
                a,
                step.reward,
                step.rl_state,
                step.done,
                allowed_next,
            );
            s = step.rl_state;
            ep_reward += step.reward;
            ep_undesired |= step.undesired;
            if step.done {
                break;
            }
        }
        episode += 1;
        if ep_undesired {
            undesired_cum += 1;
        }
        let (mut shield_states, mut rebuild_count) = (0usize, 0u32);
        if let Some(d) = dynamic.as_mut() {
            d.end_episode()?;
            if let Some(snap) = d.maybe_rebuild()? {
                last_rebuild_ms = snap.meta.build_time.as_millis() as u64;
            }
            let snap = d.snapshot();
            shield_states = snap.meta.shield_states;
            rebuild_count = snap.meta.rebuild_count;
        }
        let eval = if steps_cum >= next_eval {
            while next_eval <= steps_cum {
                next_eval += config.eval_interval;
            }
            eval_index += 1;
            let shield_for_eval = if config.shielded_eval {
                dynamic.as_ref().map(|d| d.snapshot().shield.clone())
            } else {
                None
            };
            let (mean, rate) = evaluate(
                &q,
                env,
                config.eval_episodes,
                mix_seed(seed, 0x5eed_0000 + eval_index),
                shield_for_eval.as_ref(),
            );
            if best.is_none_or(|b| mean > b.mean_reward) {
                best = Some(BestController {
                    mean_reward: mean,
                    safe_rate: rate,
                    at_step: steps_cum,
                });
            }
            Some((mean, rate))
        } else {
            None
        };
        rows.push(MetricsRow {
            episode,
            steps_cum,
            reward: ep_reward,
            undesired: ep_undesired,
            undesired_cum,
            shield_states,
            rebuild_count,
            rebuild_time_ms: last_rebuild_ms,
            eval,
        });
    }

    let (final_model, traces, fallback_queries) = match dynamic {
        Some(d) => {
            let snap = d.snapshot();
            (
                Some(snap.model.clone()),
                Some(d.store().trace_file()),
                d.snapshot().shield.fallback_queries(),
            )
        }
        None => (None, None, 0),
    };
    Ok(Metrics {
        seed,
        mode,
        rows,
        undesired_episodes: undesired_cum,
        best,
        final_model,
        traces,
        fallback_queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;

    #[test]
    fn terminal_backup_is_plain_increment() {
        let mut q = QTable::new(4, 2, 0.0, 0.5, 0.9);
        q_update(&mut q, 0, Sym(0), 1.0, 1, true, &[]);
        assert_eq!(q.get(0, Sym(0)), 0.5);
    }

    #[test]
    fn zero_reward_zero_next_leaves_table() {
        let mut q = QTable::new(4, 2, 0.0, 0.5, 0.9);
        q_update(&mut q, 0, Sym(0), 0.0, 1, false, &[Sym(0), Sym(1)]);
        assert_eq!(q.get(0, Sym(0)), 0.0);
    }

    #[test]
    fn masked_backup_uses_masked_max() {
        let mut q = QTable::new(4, 2, 0.0, 1.0, 0.5);
        // next state: action 0 worth 10, action 1 worth 2
        q_update(&mut q, 1, Sym(0), 10.0, 2, true, &[]);
        q_update(&mut q, 1, Sym(1), 2.0, 2, true, &[]);
        // full backup would bootstrap 10; the mask hides action 0
        q_update(&mut q, 0, Sym(0), 0.0, 1, false, &[Sym(1)]);
        assert_eq!(q.get(0, Sym(0)), 0.5 * 2.0);
    }

    #[test]
    fn greedy_selection_respects_mask_and_ties() {
        let mut q = QTable::new(2, 3, 0.0, 0.1, 0.9);
        q_update(&mut q, 0, Sym(2), 5.0, 1, true, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // global max is action 2; masked out, ties between 0 and 1 at 0.0
        let a = select_action(&q, 0, &[Sym(0), Sym(1)], 0.0, &mut rng);
        assert_eq!(a, Sym(0));
        let a = select_action(&q, 0, &[Sym(0), Sym(1), Sym(2)], 0.0, &mut rng);
        assert_eq!(a, Sym(2));
    }

    #[test]
    fn exploration_is_roughly_uniform() {
        let q = QTable::new(1, 4, 0.0, 0.1, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let allowed = [Sym(0), Sym(1), Sym(2)];
        let mut counts = [0u32; 3];
        let n = 100_000;
        for _ in 0..n {
            let a = select_action(&q, 0, &allowed, 1.0, &mut rng);
            counts[a.index()] += 1;
        }
        // chi-square with 2 dof; 13.8 is the 0.1% critical value
        let expected = n as f64 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.8, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn epsilon_schedule_decays_linearly_then_floors() {
        let c = TrainConfig {
            total_steps: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(250) - 0.525).abs() < 1e-12);
        assert!((c.epsilon(500) - 0.05).abs() < 1e-12);
        assert!((c.epsilon(999) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn plain_training_is_deterministic_and_shieldless() {
        let mut env = make_env("cliffwalk").unwrap();
        let cfg = TrainConfig {
            total_steps: 2000,
            eval_interval: 1000,
            eval_episodes: 5,
            ..TrainConfig::default()
        };
        let m1 = train(env.as_mut(), Mode::Plain, &cfg, 42).unwrap();
        let m2 = train(env.as_mut(), Mode::Plain, &cfg, 42).unwrap();
        assert_eq!(m1.rows, m2.rows);
        assert!(m1.rows.iter().all(|r| r.rebuild_count == 0));
        assert!(m1.final_model.is_none());
    }

    #[test]
    fn shielded_training_runs_and_rebuilds() {
        let mut env = make_env("cliffwalk").unwrap();
        let cfg = TrainConfig {
            total_steps: 3000,
            eval_interval: 1500,
            eval_episodes: 5,
            ..TrainConfig::default()
        };
        let m = train(env.as_mut(), Mode::Shielded, &cfg, 7).unwrap();
        assert!(m.rows.last().unwrap().rebuild_count > 0);
        let model = m.final_model.as_ref().unwrap();
        assert!(model.machine().state_count() >= 1);
        assert!(m.traces.as_ref().unwrap().episodes.len() > 1);
    }

    #[test]
    fn q_values_stay_bounded() {
        let mut env = make_env("watertank").unwrap();
        let cfg = TrainConfig {
            total_steps: 5000,
            eval_interval: 5000,
            eval_episodes: 3,
            ..TrainConfig::default()
        };
        let _ = train(env.as_mut(), Mode::Plain, &cfg, 1).unwrap();
        // rerun capturing the table through a small wrapper: bound check via
        // a fresh table trained inline
        let mut q = QTable::new(env.rl_state_count(), env.cont().len(), 0.0, 0.1, 0.99);
        let all: Vec<Sym> = env.cont().syms().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = env.reset(11);
        for _ in 0..20_000 {
            let a = select_action(&q, s, &all, 0.3, &mut rng);
            let st = env.step(a);
            q_update(&mut q, s, a, st.reward, st.rl_state, st.done, &all);
            s = if st.done { env.reset(rng.gen()) } else { st.rl_state };
        }
        let bound = 100.0 / (1.0 - 0.99) + 1e-9;
        assert!(q.values().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn mean_reward_formatting_round_trips() {
        let m = Metrics {
            seed: 3,
            mode: Mode::Plain,
            rows: vec![MetricsRow {
                episode: 1,
                steps_cum: 10,
                reward: -1.25,
                undesired: true,
                undesired_cum: 1,
                shield_states: 0,
                rebuild_count: 0,
                rebuild_time_ms: 0,
                eval: Some((1.5, 0.9)),
            }],
            undesired_episodes: 1,
            best: None,
            final_model: None,
            traces: None,
            fallback_queries: 0,
        };
        let csv = m.to_csv();
        assert!(csv.starts_with(METRICS_HEADER));
        assert!(csv.contains("3,1,10,-1.25,1,1,0,0,0,1.5,0.9"));
    }
}
