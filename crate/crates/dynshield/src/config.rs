//! Experiment configuration: a flat key=value file mirroring the training
//! CLI flags, with CLI values taking precedence.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::dynamic::RebuildPolicy;
use crate::rl::{Mode, TrainConfig};
use crate::{Error, Result};

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(i + 1, format!("expected key=value, got '{line}'")));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// A full training-experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub train: TrainConfig,
    pub dump_model: Option<PathBuf>,
    pub dump_traces: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale step budgets per benchmark.
    pub fn default_steps(env: &str) -> u64 {
        match env {
            "gridworld" => 100_000,
            _ => 50_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Invalid("seeds must be distinct".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Invalid("jobs must be at least 1".into()));
        }
        self.train.validate()
    }

    /// Merges a key=value map under explicit CLI values. Unknown keys are
    /// rejected so typos do not silently fall back to defaults.
    pub fn apply_kv(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in map {
            match k.as_str() {
                "env" => self.env = v.clone(),
                "mode" => self.mode = Mode::parse(v)?,
                "seeds" => self.seeds = parse_seeds(v)?,
                "out_dir" => self.out_dir = PathBuf::from(v),
                "jobs" => self.jobs = parse_num(k, v)? as usize,
                "steps" => self.train.total_steps = parse_num(k, v)?,
                "eval_interval" => self.train.eval_interval = parse_num(k, v)?,
                "eval_episodes" => self.train.eval_episodes = parse_num(k, v)? as u32,
                "alpha" => self.train.alpha = parse_float(k, v)?,
                "gamma" => self.train.gamma = parse_float(k, v)?,
                "epsilon_start" => self.train.epsilon_start = parse_float(k, v)?,
                "epsilon_end" => self.train.epsilon_end = parse_float(k, v)?,
                "q_init" => self.train.q_init = parse_float(k, v)?,
                "masked_backup" => self.train.masked_backup = parse_bool(k, v)?,
                "shielded_eval" => self.train.shielded_eval = parse_bool(k, v)?,
                "min_new_steps" => self.train.policy.min_new_steps = parse_num(k, v)?,
                "rebuild_on_undesired" => {
                    self.train.policy.rebuild_on_undesired = parse_bool(k, v)?
                }
                "min_depth_cap" => self.train.policy.min_depth_cap = parse_num(k, v)? as u32,
                other => {
                    return Err(Error::Invalid(format!("unknown config key '{other}'")));
                }
            }
        }
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: "watertank".into(),
            mode: Mode::Shielded,
            seeds: vec![0],
            out_dir: PathBuf::from("out"),
            jobs: 1,
            train: TrainConfig {
                policy: RebuildPolicy::default(),
                ..TrainConfig::default()
            },
            dump_model: None,
            dump_traces: None,
        }
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| Error::Invalid(format!("bad seed '{p}'")))
        })
        .collect()
}

fn parse_num(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Invalid(format!("bad integer for '{key}': '{v}'")))
}

fn parse_float(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Invalid(format!("bad number for '{key}': '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Invalid(format!("bad boolean for '{key}': '{v}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_file_overrides_defaults() {
        let mut cfg = ExperimentConfig::default();
        let map = parse_kv("env=cliffwalk\nsteps=1234\n# comment\nseeds=1,2,3\nmode=plain\n")
            .unwrap();
        cfg.apply_kv(&map).unwrap();
        assert_eq!(cfg.env, "cliffwalk");
        assert_eq!(cfg.train.total_steps, 1234);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.mode, Mode::Plain);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = ExperimentConfig::default();
        let map = parse_kv("stepz=10\n").unwrap();
        assert!(cfg.apply_kv(&map).is_err());
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = parse_kv("a=1\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
