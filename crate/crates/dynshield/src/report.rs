//! Aggregation of per-seed metrics CSVs into the summary table: mean
//! undesired episodes, mean best evaluation reward, and the safe rate of the
//! best controller, grouped per environment and mode.

use std::collections::BTreeMap;

use crate::rl::METRICS_HEADER;
use crate::{Error, Result};

/// The slice of a metrics row the report needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowLite {
    pub seed: u64,
    pub undesired_cum: u64,
    pub eval: Option<(f64, f64)>,
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<RowLite>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Invalid("empty metrics file".into()))?;
    if header != METRICS_HEADER {
        return Err(Error::Invalid(format!(
            "unexpected metrics header '{header}'"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(Error::parse(i + 2, "expected 11 columns"));
        }
        let num = |j: usize| -> Result<u64> {
            cols[j]
                .parse()
                .map_err(|_| Error::parse(i + 2, format!("bad integer '{}'", cols[j])))
        };
        let eval = if cols[9].is_empty() {
            None
        } else {
            let m: f64 = cols[9]
                .parse()
                .map_err(|_| Error::parse(i + 2, "bad eval reward"))?;
            let s: f64 = cols[10]
                .parse()
                .map_err(|_| Error::parse(i + 2, "bad safe rate"))?;
            Some((m, s))
        };
        rows.push(RowLite {
            seed: num(0)?,
            undesired_cum: num(5)?,
            eval,
        });
    }
    Ok(rows)
}

/// Per-run digest: total undesired episodes and the best evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub undesired_episodes: u64,
    pub best_mean_reward: Option<f64>,
    pub best_safe_rate: Option<f64>,
}

pub fn summarize_run(rows: &[RowLite]) -> Result<RunSummary> {
    let last = rows
        .last()
        .ok_or_else(|| Error::Invalid("metrics file has no rows".into()))?;
    let mut best: Option<(f64, f64)> = None;
    for r in rows {
        if let Some((m, s)) = r.eval {
            if best.is_none_or(|(bm, _)| m > bm) {
                best = Some((m, s));
            }
        }
    }
    Ok(RunSummary {
        seed: rows[0].seed,
        undesired_episodes: last.undesired_cum,
        best_mean_reward: best.map(|(m, _)| m),
        best_safe_rate: best.map(|(_, s)| s),
    })
}

/// One line of the final table.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub env: String,
    pub mode: String,
    pub runs: usize,
    pub mean_undesired_episodes: f64,
    pub mean_best_reward: f64,
    pub mean_safe_rate: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Groups per-(env, mode) run summaries into table rows, sorted by group key.
pub fn aggregate(groups: BTreeMap<(String, String), Vec<RunSummary>>) -> Vec<GroupSummary> {
    groups
        .into_iter()
        .map(|((env, mode), runs)| GroupSummary {
            env,
            mode,
            runs: runs.len(),
            mean_undesired_episodes: mean(runs.iter().map(|r| r.undesired_episodes as f64)),
            mean_best_reward: mean(runs.iter().filter_map(|r| r.best_mean_reward)),
            mean_safe_rate: mean(runs.iter().filter_map(|r| r.best_safe_rate)),
        })
        .collect()
}

pub fn render_table(rows: &[GroupSummary]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<12} {:<10} {:>5} {:>20} {:>18} {:>15}\n",
        "env", "mode", "runs", "undesired_episodes", "best_mean_reward", "best_safe_rate"
    ));
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:<10} {:>5} {:>20.2} {:>18.2} {:>15.3}\n",
            r.env, r.mode, r.runs, r.mean_undesired_episodes, r.mean_best_reward, r.mean_safe_rate
        ));
    }
    s
}

pub fn render_csv(rows: &[GroupSummary]) -> String {
    let mut s =
        String::from("env,mode,runs,mean_undesired_episodes,mean_best_reward,mean_safe_rate\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.env, r.mode, r.runs, r.mean_undesired_episodes, r.mean_best_reward, r.mean_safe_rate
        ));
    }
    s
}

/// Parses `<env>_<mode>_seed<k>.csv` into its group key.
pub fn parse_metrics_filename(name: &str) -> Option<(String, String)> {
    let stem = name.strip_suffix(".csv")?;
    let (rest, _seed) = stem.rsplit_once("_seed")?;
    let (env, mode) = rest.rsplit_once('_')?;
    if mode != "plain" && mode != "shielded" {
        return None;
    }
    Some((env.to_string(), mode.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parse_and_summary() {
        let text = format!(
            "{METRICS_HEADER}\n7,1,10,-5,1,1,0,0,0,,\n7,2,20,3,0,1,0,0,0,1.5,0.8\n7,3,30,4,0,1,0,0,0,0.5,1\n"
        );
        let rows = parse_metrics_csv(&text).unwrap();
        assert_eq!(rows.len(), 3);
        let s = summarize_run(&rows).unwrap();
        assert_eq!(s.undesired_episodes, 1);
        assert_eq!(s.best_mean_reward, Some(1.5));
        assert_eq!(s.best_safe_rate, Some(0.8));
    }

    #[test]
    fn filename_grouping() {
        assert_eq!(
            parse_metrics_filename("watertank_plain_seed3.csv"),
            Some(("watertank".into(), "plain".into()))
        );
        assert_eq!(
            parse_metrics_filename("cliffwalk_shielded_seed12.csv"),
            Some(("cliffwalk".into(), "shielded".into()))
        );
        assert_eq!(parse_metrics_filename("notes.txt"), None);
        assert_eq!(parse_metrics_filename("x_other_seed1.csv"), None);
    }

    #[test]
    fn aggregation_means() {
        let mut groups = BTreeMap::new();
        groups.insert(
            ("e".to_string(), "plain".to_string()),
            vec![
                RunSummary {
                    seed: 0,
                    undesired_episodes: 10,
                    best_mean_reward: Some(1.0),
                    best_safe_rate: Some(0.5),
                },
                RunSummary {
                    seed: 1,
                    undesired_episodes: 20,
                    best_mean_reward: Some(3.0),
                    best_safe_rate: Some(1.0),
                },
            ],
        );
        let rows = aggregate(groups);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_undesired_episodes, 15.0);
        assert_eq!(rows[0].mean_best_reward, 2.0);
        assert_eq!(rows[0].mean_safe_rate, 0.75);
    }
}
