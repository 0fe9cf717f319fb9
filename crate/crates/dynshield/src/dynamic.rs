//! The dynamic-shielding orchestrator: accumulates execution traces, decides
//! when to relearn, runs the learn -> compose -> solve -> synthesize
//! pipeline, and swaps in the fresh shield as an immutable snapshot.
//!
//! Single writer, many readers: rebuilds publish an `Arc<ShieldSnapshot>`
//! atomically, so a reader holding the previous snapshot never observes a
//! half-built shield. This implementation rebuilds inline at episode
//! boundaries, which satisfies the same contract.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::alphabet::{Alphabet, Sym};
use crate::format::TraceFile;
use crate::fsrs::Fsrs;
use crate::game::{compose, synthesize_preemptive, winning_region, PreemptiveShield};
use crate::learn::{adaptive_min_depth, rpni, RunLog, SampleSet};
use crate::mealy::MealyMachine;
use crate::safety::{SafetyAutomaton, SpecState};
use crate::{Error, Result};

/// When to rebuild the shield.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RebuildPolicy {
    /// Rebuild once this many new steps accumulated since the last build.
    pub min_new_steps: u64,
    /// Also rebuild right after any episode containing a violating output.
    pub rebuild_on_undesired: bool,
    /// Upper bound for the adaptive merge-gate threshold.
    pub min_depth_cap: u32,
}

impl Default for RebuildPolicy {
    fn default() -> Self {
        RebuildPolicy {
            min_new_steps: 1000,
            rebuild_on_undesired: true,
            min_depth_cap: 5,
        }
    }
}

impl RebuildPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.min_new_steps == 0 {
            return Err(Error::Invalid("min_new_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Completed and in-progress episodes, with the derived sample set kept
/// incrementally up to date (insertion only ever adds words, so the cache
/// never goes stale).
pub struct TraceStore {
    cont: Alphabet,
    env: Alphabet,
    out: Alphabet,
    samples: SampleSet,
    run_log: RunLog,
    episodes: Vec<Vec<(Sym, Sym, Sym)>>,
    open: Option<Vec<(Sym, Sym, Sym)>>,
    cursor: u32,
    total_steps: u64,
}

impl TraceStore {
    pub fn new(
        cont: Alphabet,
        env: Alphabet,
        out: Alphabet,
        max_ep_len: u32,
        min_depth_cap: u32,
    ) -> Self {
        let samples = SampleSet::new(Alphabet::product(&cont, &env), out.clone());
        TraceStore {
            cont,
            env,
            out,
            samples,
            run_log: RunLog::new(max_ep_len, min_depth_cap),
            episodes: Vec::new(),
            open: None,
            cursor: 0,
            total_steps: 0,
        }
    }

    pub fn begin_episode(&mut self) -> Result<()> {
        if self.open.is_some() {
            return Err(Error::Invalid(
                "begin_episode while an episode is already open".into(),
            ));
        }
        self.open = Some(Vec::new());
        self.cursor = 0;
        Ok(())
    }

    pub fn record_step(&mut self, c: Sym, e: Sym, out: Sym) -> Result<()> {
        let ne = self.env.len() as u16;
        let open = self.open.as_mut().ok_or_else(|| {
            Error::Invalid("record_step without an open episode".into())
        })?;
        open.push((c, e, out));
        self.cursor = self.samples.extend(self.cursor, Sym(c.0 * ne + e.0), out)?;
        self.total_steps += 1;
        Ok(())
    }

    pub fn end_episode(&mut self) -> Result<()> {
        let ep = self.open.take().ok_or_else(|| {
            Error::Invalid("end_episode without an open episode".into())
        })?;
        if ep.is_empty() {
            return Err(Error::Invalid("cannot end an empty episode".into()));
        }
        self.run_log.push(ep.len() as u32)?;
        self.episodes.push(ep);
        self.cursor = 0;
        Ok(())
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn run_log(&self) -> &RunLog {
        &self.run_log
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn episodes(&self) -> &[Vec<(Sym, Sym, Sym)>] {
        &self.episodes
    }

    /// Snapshot of the completed episodes in the `.trace` format.
    pub fn trace_file(&self) -> TraceFile {
        TraceFile {
            cont: self.cont.clone(),
            env: self.env.clone(),
            out: self.out.clone(),
            episodes: self.episodes.clone(),
        }
    }
}

/// Immutable result of one rebuild.
pub struct ShieldSnapshot {
    pub shield: PreemptiveShield,
    pub model: Fsrs,
    pub meta: SnapshotMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub sample_size: usize,
    pub model_states: usize,
    pub shield_states: usize,
    pub min_depth: u32,
    pub build_time: Duration,
    /// How many rebuilds produced this snapshot (0 for the initial trivial
    /// shield).
    pub rebuild_count: u32,
}

/// The live handle the training loop talks to: owns the trace store, the
/// rebuild policy, and the working shield cursor; publishes snapshots.
pub struct DynamicShield {
    spec: SafetyAutomaton,
    store: TraceStore,
    policy: RebuildPolicy,
    shield: PreemptiveShield,
    snapshot: Arc<ShieldSnapshot>,
    steps_since_build: u64,
    rebuild_count: u32,
    spec_cursor: SpecState,
    episode_violated: bool,
    last_episode_violated: bool,
}

fn build_snapshot(
    cont: &Alphabet,
    env: &Alphabet,
    machine: MealyMachine,
    spec: &SafetyAutomaton,
    sample_size: usize,
    min_depth: u32,
    rebuild_count: u32,
    started: Instant,
) -> Result<ShieldSnapshot> {
    let model = Fsrs::new(machine, cont.clone(), env.clone())?;
    let game = compose(&model, spec)?;
    let w = winning_region(&game);
    let shield = synthesize_preemptive(&game, &w);
    let meta = SnapshotMeta {
        sample_size,
        model_states: model.machine().state_count(),
        shield_states: shield.state_count(),
        min_depth,
        build_time: started.elapsed(),
        rebuild_count,
    };
    Ok(ShieldSnapshot { shield, model, meta })
}

impl DynamicShield {
    /// Starts with the trivial all-sink shield of the empty model: before
    /// any evidence exists, everything is allowed.
    pub fn new(
        cont: Alphabet,
        env: Alphabet,
        out: Alphabet,
        spec: SafetyAutomaton,
        policy: RebuildPolicy,
        max_ep_len: u32,
    ) -> Result<Self> {
        policy.validate()?;
        if spec.sigma() != &out {
            return Err(Error::AlphabetMismatch(
                "specification alphabet differs from the environment outputs".into(),
            ));
        }
        let store = TraceStore::new(
            cont.clone(),
            env.clone(),
            out.clone(),
            max_ep_len,
            policy.min_depth_cap,
        );
        let empty = MealyMachine::trivial(Alphabet::product(&cont, &env), out, "q0");
        let snapshot = Arc::new(build_snapshot(
            &cont,
            &env,
            empty,
            &spec,
            0,
            policy.min_depth_cap,
            0,
            Instant::now(),
        )?);
        let spec_cursor = spec.initial();
        Ok(DynamicShield {
            spec,
            store,
            policy,
            shield: snapshot.shield.clone(),
            snapshot,
            steps_since_build: 0,
            rebuild_count: 0,
            spec_cursor,
            episode_violated: false,
            last_episode_violated: false,
        })
    }

    pub fn store(&self) -> &TraceStore {
        &self.store
    }

    pub fn snapshot(&self) -> Arc<ShieldSnapshot> {
        Arc::clone(&self.snapshot)
    }

    pub fn rebuild_count(&self) -> u32 {
        self.rebuild_count
    }

    pub fn on_episode_start(&mut self) -> Result<()> {
        self.shield.reset();
        self.spec_cursor = self.spec.initial();
        self.episode_violated = false;
        self.store.begin_episode()
    }

    /// The allowed set at the current cursor; never empty.
    pub fn current_allowed(&mut self) -> &[Sym] {
        self.shield.allowed_actions()
    }

    /// Records an executed step and advances both the shield cursor and the
    /// specification cursor.
    pub fn advance(&mut self, c: Sym, e: Sym, out: Sym) -> Result<()> {
        self.shield.advance(c, e, out);
        self.spec_cursor = self.spec.next(self.spec_cursor, out);
        if !self.spec.is_safe(self.spec_cursor) {
            self.episode_violated = true;
        }
        self.store.record_step(c, e, out)?;
        self.steps_since_build += 1;
        Ok(())
    }

    pub fn end_episode(&mut self) -> Result<()> {
        self.store.end_episode()?;
        self.last_episode_violated = self.episode_violated;
        Ok(())
    }

    /// Rebuilds when enough new data accumulated or the last episode
    /// violated the specification. Call at episode boundaries only.
    pub fn maybe_rebuild(&mut self) -> Result<Option<Arc<ShieldSnapshot>>> {
        debug_assert!(self.store.open.is_none(), "rebuild mid-episode");
        let due = self.steps_since_build >= self.policy.min_new_steps
            || (self.policy.rebuild_on_undesired
                && std::mem::take(&mut self.last_episode_violated)
                && self.steps_since_build > 0);
        if !due {
            return Ok(None);
        }
        Ok(Some(self.rebuild()?))
    }

    /// Unconditional rebuild from the whole store.
    pub fn rebuild(&mut self) -> Result<Arc<ShieldSnapshot>> {
        let started = Instant::now();
        let min_depth = adaptive_min_depth(self.store.run_log());
        let machine = rpni(self.store.samples(), min_depth)?;
        self.rebuild_count += 1;
        let snapshot = Arc::new(build_snapshot(
            &self.store.cont,
            &self.store.env,
            machine,
            &self.spec,
            self.store.samples().len(),
            min_depth,
            self.rebuild_count,
            started,
        )?);
        self.shield = snapshot.shield.clone();
        self.snapshot = Arc::clone(&snapshot);
        self.steps_since_build = 0;
        self.last_episode_violated = false;
        Ok(snapshot)
    }

    pub fn spec(&self) -> &SafetyAutomaton {
        &self.spec
    }
}
