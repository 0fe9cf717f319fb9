use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use dynshield::abstraction::abstracts;
use dynshield::config::{parse_kv, parse_seeds, ExperimentConfig};
use dynshield::dot::{fsrs_to_dot, game_to_dot};
use dynshield::envs::make_env;
use dynshield::format::{
    parse_fsrs, parse_spec, parse_trace, serialize_fsrs, serialize_shield, serialize_trace,
};
use dynshield::game::{compose, synthesize_preemptive, verify_shield, winning_region};
use dynshield::learn::rpni;
use dynshield::report;
use dynshield::rl::{train, Mode};
use dynshield::Fsrs;

#[derive(Parser)]
#[command(
    name = "dynshield",
    about = "Dynamic shielding for safe reinforcement learning: learn models from traces, build shields, train shielded agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a tabular Q-learning agent, optionally under a dynamic shield.
    Train(TrainArgs),
    /// Learn a model from a trace file.
    Learn(LearnArgs),
    /// Build a shield from a model and a specification.
    Shield(ShieldArgs),
    /// Check abstraction or certify a shield against a ground truth.
    #[command(visible_alias = "verify-shield")]
    Verify(VerifyArgs),
    /// Aggregate metrics CSVs into a summary table.
    Report(ReportArgs),
    /// Export an environment's ground-truth model.
    DumpTruth(DumpTruthArgs),
    /// Relearn a model from a trace file with the adaptive merge gate.
    DumpModel(DumpModelArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file of key=value lines; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// watertank | gridworld | cliffwalk | taxi
    #[arg(long)]
    env: Option<String>,
    /// plain | shielded
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    /// Comma-separated list of seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel workers for the seed matrix.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    min_new_steps: Option<u64>,
    #[arg(long)]
    rebuild_on_undesired: Option<bool>,
    #[arg(long)]
    min_depth_cap: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    shielded_eval: Option<bool>,
    #[arg(long)]
    masked_backup: Option<bool>,
    /// Export the final learned model per seed (shielded mode).
    #[arg(long)]
    dump_model: Option<PathBuf>,
    /// Export the recorded traces per seed (shielded mode).
    #[arg(long)]
    dump_traces: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = 0)]
    min_depth: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct ShieldArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also export the composed game as DOT.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Ground-truth model file.
    #[arg(long)]
    truth: PathBuf,
    /// Candidate model file.
    #[arg(long)]
    model: PathBuf,
    /// With a spec: build the shield from (model, spec) and certify it
    /// against the truth. Without: check that the model abstracts the truth.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of <env>_<mode>_seed<k>.csv files.
    #[arg(long)]
    dir: PathBuf,
    /// Also write the summary as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DumpTruthArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Export the environment's safety automaton instead of the model.
    #[arg(long)]
    spec_out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpModelArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    max_ep_len: u32,
    #[arg(long, default_value_t = 5)]
    min_depth_cap: u32,
    #[arg(long)]
    dot: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Learn(a) => cmd_learn(a),
        Command::Shield(a) => cmd_shield(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Report(a) => cmd_report(a),
        Command::DumpTruth(a) => cmd_dump_truth(a),
        Command::DumpModel(a) => cmd_dump_model(a),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Inserts a seed tag before the extension: out/model.fsrs -> out/model_seed3.fsrs
fn seed_path(base: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let ext = base
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    base.with_file_name(format!("{stem}_seed{seed}{ext}"))
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &a.config {
        cfg.apply_kv(&parse_kv(&read(path)?)?)?;
    }
    if let Some(v) = a.env {
        cfg.env = v;
    }
    if let Some(v) = a.mode {
        cfg.mode = Mode::parse(&v)?;
    }
    cfg.train.total_steps = a
        .steps
        .unwrap_or(if a.config.is_some() {
            cfg.train.total_steps
        } else {
            ExperimentConfig::default_steps(&cfg.env)
        });
    if let Some(v) = a.eval_interval {
        cfg.train.eval_interval = v;
    }
    if let Some(v) = a.seeds {
        cfg.seeds = parse_seeds(&v)?;
    }
    if let Some(v) = a.out {
        cfg.out_dir = v;
    }
    if let Some(v) = a.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = a.min_new_steps {
        cfg.train.policy.min_new_steps = v;
    }
    if let Some(v) = a.rebuild_on_undesired {
        cfg.train.policy.rebuild_on_undesired = v;
    }
    if let Some(v) = a.min_depth_cap {
        cfg.train.policy.min_depth_cap = v;
    }
    if let Some(v) = a.alpha {
        cfg.train.alpha = v;
    }
    if let Some(v) = a.gamma {
        cfg.train.gamma = v;
    }
    if let Some(v) = a.shielded_eval {
        cfg.train.shielded_eval = v;
    }
    if let Some(v) = a.masked_backup {
        cfg.train.masked_backup = v;
    }
    cfg.dump_model = a.dump_model;
    cfg.dump_traces = a.dump_traces;
    make_env(&cfg.env)?; // validate the name before spawning workers
    cfg.validate()?;

    fs::create_dir_all(&cfg.out_dir)?;
    let many = cfg.seeds.len() > 1;
    let queue: Mutex<Vec<u64>> = Mutex::new(cfg.seeds.iter().rev().copied().collect());
    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs.min(cfg.seeds.len()) {
            scope.spawn(|| loop {
                let Some(seed) = queue.lock().unwrap().pop() else {
                    return;
                };
                let result = (|| -> anyhow::Result<()> {
                    let mut env = make_env(&cfg.env)?;
                    let metrics = train(env.as_mut(), cfg.mode, &cfg.train, seed)?;
                    let name = format!("{}_{}_seed{}.csv", cfg.env, cfg.mode.as_str(), seed);
                    write(&cfg.out_dir.join(name), &metrics.to_csv())?;
                    if let Some(base) = &cfg.dump_model {
                        match &metrics.final_model {
                            Some(model) => write(
                                &seed_path(base, seed, many),
                                &serialize_fsrs(model),
                            )?,
                            None => eprintln!("seed {seed}: no model to dump in plain mode"),
                        }
                    }
                    if let Some(base) = &cfg.dump_traces {
                        if let Some(tf) = &metrics.traces {
                            write(&seed_path(base, seed, many), &serialize_trace(tf))?;
                        }
                    }
                    let best = metrics
                        .best
                        .map(|b| format!("best eval reward {:.2}, safe rate {:.2}", b.mean_reward, b.safe_rate))
                        .unwrap_or_else(|| "no evaluation ran".into());
                    println!(
                        "seed {seed}: {} episodes, {} undesired, {best}",
                        metrics.rows.len(),
                        metrics.undesired_episodes
                    );
                    Ok(())
                })();
                if let Err(e) = result {
                    failures.lock().unwrap().push(format!("seed {seed}: {e:#}"));
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        bail!("{} run(s) failed:\n{}", failures.len(), failures.join("\n"));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_learn(a: LearnArgs) -> anyhow::Result<ExitCode> {
    let trace = parse_trace(&read(&a.traces)?)?;
    if trace.episodes.is_empty() {
        eprintln!("warning: no episodes in trace file; the model is a single state");
    }
    let sample = trace.sample_set()?;
    let machine = rpni(&sample, a.min_depth)?;
    let model = Fsrs::new(machine, trace.cont.clone(), trace.env.clone())?;
    write(&a.out, &serialize_fsrs(&model))?;
    if let Some(dot) = a.dot {
        write(&dot, &fsrs_to_dot(&model))?;
    }
    println!(
        "learned {} states from {} sampled words",
        model.machine().state_count(),
        sample.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_shield(a: ShieldArgs) -> anyhow::Result<ExitCode> {
    let model = parse_fsrs(&read(&a.model)?)?;
    let spec = parse_spec(&read(&a.spec)?)?;
    let game = compose(&model, &spec)?;
    let w = winning_region(&game);
    let shield = synthesize_preemptive(&game, &w);
    write(&a.out, &serialize_shield(&shield))?;
    if let Some(dot) = a.dot {
        write(&dot, &game_to_dot(&game, Some(&w)))?;
    }
    println!(
        "shield over {} game states ({} winning)",
        game.state_count(),
        w.count()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> anyhow::Result<ExitCode> {
    let truth = parse_fsrs(&read(&a.truth)?)?;
    let model = parse_fsrs(&read(&a.model)?)?;
    match a.spec {
        Some(spec_path) => {
            let spec = parse_spec(&read(&spec_path)?)?;
            let game = compose(&model, &spec)?;
            let w = winning_region(&game);
            let shield = synthesize_preemptive(&game, &w);
            let violations = verify_shield(&truth, &spec, &shield)?;
            if violations.is_empty() {
                println!("OK");
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    println!("violation: {}", v.render(&truth));
                }
                Ok(ExitCode::from(2))
            }
        }
        None => {
            if abstracts(model.machine(), truth.machine())? {
                println!("OK");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("model does not abstract the truth");
                Ok(ExitCode::from(2))
            }
        }
    }
}

fn cmd_report(a: ReportArgs) -> anyhow::Result<ExitCode> {
    let mut groups: BTreeMap<(String, String), Vec<report::RunSummary>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(&a.dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(key) = report::parse_metrics_filename(name) else {
            continue;
        };
        let rows = report::parse_metrics_csv(&read(&path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        groups.entry(key).or_default().push(report::summarize_run(&rows)?);
    }
    if groups.is_empty() {
        bail!("no metrics files found in {}", a.dir.display());
    }
    let rows = report::aggregate(groups);
    print!("{}", report::render_table(&rows));
    if let Some(csv) = a.csv {
        write(&csv, &report::render_csv(&rows))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump_truth(a: DumpTruthArgs) -> anyhow::Result<ExitCode> {
    let env = make_env(&a.env)?;
    if let Some(spec_out) = &a.spec_out {
        write(spec_out, &dynshield::format::serialize_spec(&env.spec()))?;
    }
    let truth = env.truth().ok_or_else(|| {
        anyhow::anyhow!(
            "environment '{}' has no tractable ground-truth export",
            a.env
        )
    })?;
    write(&a.out, &serialize_fsrs(&truth))?;
    if let Some(dot) = a.dot {
        write(&dot, &fsrs_to_dot(&truth))?;
    }
    println!(
        "exported {} states, {} transitions",
        truth.machine().state_count(),
        truth.machine().transition_count()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump_model(a: DumpModelArgs) -> anyhow::Result<ExitCode> {
    let trace = parse_trace(&read(&a.traces)?)?;
    let log = trace.run_log(a.max_ep_len, a.min_depth_cap)?;
    let min_depth = dynshield::learn::adaptive_min_depth(&log);
    let sample = trace.sample_set()?;
    let machine = rpni(&sample, min_depth)?;
    let model = Fsrs::new(machine, trace.cont.clone(), trace.env.clone())?;
    write(&a.out, &serialize_fsrs(&model))?;
    if let Some(dot) = a.dot {
        write(&dot, &fsrs_to_dot(&model))?;
    }
    println!(
        "learned {} states at adaptive min-depth {min_depth}",
        model.machine().state_count()
    );
    Ok(ExitCode::SUCCESS)
}

