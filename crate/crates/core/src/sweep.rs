//! Seeded experiment sweeps.
//!
//! A sweep runs one algorithm on one environment family for every
//! `(horizon, seed)` pair and writes, into `out_dir`:
//!
//! - `traj_T{T}_s{seed}.csv`: header `t,cum_regret`, one row every `thin`
//!   rounds plus the final round;
//! - `report_T{T}_s{seed}.json`: schedule, comparator, final regret, epoch
//!   events and (optionally) the regret decomposition;
//! - `summary.json`: per-horizon regret percentiles and sweep metadata.
//!
//! Runs are independent and may execute in parallel; files are written by a
//! single thread in `(T, seed)` order and are byte-identical across
//! execution modes. JSON keys are sorted and floats use the shortest
//! round-trip representation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algo::{derive_schedule, run_episode, ParamSchedule};
use crate::baselines::{run_baseline, BaselineKind};
use crate::diagnostics::{analyze, EpochEvents};
use crate::env::{build_oracle, EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::regret::{best_fixed_policy, cumulative_regret, Policy};
use crate::rng::{RngStreams, StreamSeeds, RNG_ALGORITHM, STREAM_STRIDE};
use crate::summary::Percentiles;

pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_HEADER: &str = "t,cum_regret";

/// Runs are executed and flushed in batches of this many.
const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoKind {
    Crosslearn,
    PerContextExp3ix,
    KnownNuCross,
    Uniform,
}

impl AlgoKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgoKind::Crosslearn => "crosslearn",
            AlgoKind::PerContextExp3ix => "per_context_exp3ix",
            AlgoKind::KnownNuCross => "known_nu_cross",
            AlgoKind::Uniform => "uniform",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [
            AlgoKind::Crosslearn,
            AlgoKind::PerContextExp3ix,
            AlgoKind::KnownNuCross,
            AlgoKind::Uniform,
        ]
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| Error::invalid(format!("unknown algorithm '{name}'")))
    }

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            AlgoKind::Crosslearn => None,
            AlgoKind::PerContextExp3ix => Some(BaselineKind::PerContextExp3ix),
            AlgoKind::KnownNuCross => Some(BaselineKind::KnownNuCross),
            AlgoKind::Uniform => Some(BaselineKind::Uniform),
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    pub algo: AlgoKind,
    pub arms: usize,
    pub contexts: usize,
    pub horizons: Vec<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "one")]
    pub n_seeds: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default)]
    pub emit_decomposition: bool,
    /// Not echoed into outputs, so that sweeps written to different
    /// directories stay byte-identical.
    #[serde(default, skip_serializing)]
    pub out_dir: PathBuf,
    /// Fixed environment seed; when absent every run derives its own from
    /// its environment stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_probs: Option<Vec<f64>>,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(env: EnvKind, algo: AlgoKind, arms: usize, contexts: usize, horizons: Vec<usize>) -> Self {
        Self {
            env,
            algo,
            arms,
            contexts,
            horizons,
            delta: default_delta(),
            seed_base: 0,
            n_seeds: 1,
            thin: 1,
            emit_decomposition: false,
            out_dir: PathBuf::new(),
            env_seed: None,
            context_probs: None,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::invalid("n_seeds must be >= 1"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be >= 1"));
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs must be >= 1"));
        }
        if self.horizons.is_empty() {
            return Err(Error::invalid("at least one horizon is required"));
        }
        if let Some(&t) = self.horizons.iter().find(|&&t| t < 4) {
            return Err(Error::invalid(format!("horizons must be >= 4, got {t}")));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.seed_base.checked_add(self.n_seeds as u64 - 1).is_none() {
            return Err(Error::invalid("seed range overflows"));
        }
        for &t in &self.horizons {
            self.env_spec(t, self.env_seed.unwrap_or(0)).validate()?;
            if self.algo == AlgoKind::Crosslearn {
                derive_schedule(self.arms, t, self.delta)?;
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(move |i| self.seed_base + i)
    }

    /// Distinct horizons in ascending order.
    pub fn sorted_horizons(&self) -> Vec<usize> {
        let mut h = self.horizons.clone();
        h.sort_unstable();
        h.dedup();
        h
    }

    fn env_spec(&self, horizon: usize, env_seed: u64) -> EnvSpec {
        EnvSpec {
            kind: self.env.clone(),
            arms: self.arms,
            contexts: self.contexts,
            horizon,
            env_seed,
            context_probs: self.context_probs.clone(),
        }
    }
}

/// How a sweep's runs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// Rayon worker pool (serial when built without the `parallel` feature).
    Parallel,
}

/// Everything one `(horizon, seed)` run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub horizon: usize,
    pub seed: u64,
    pub final_regret: f64,
    pub report: Value,
    pub trajectory: String,
}

#[derive(Serialize)]
struct EventSummary<'a> {
    epochs: &'a [EpochEvents],
    completed_epochs: usize,
    frequency_failures: usize,
    loss_failures: usize,
    good_event: bool,
    fallbacks_after_first_epoch: usize,
}

#[derive(Serialize)]
struct RunReport<'a> {
    algo: AlgoKind,
    env: &'a EnvSpec,
    horizon: usize,
    seed: u64,
    rng: StreamSeeds,
    schedule: Option<ParamSchedule>,
    policy: &'a Policy,
    final_regret: f64,
    fallback_rounds: usize,
    events: Option<EventSummary<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposition: Option<crate::diagnostics::DecompositionLedger>,
}

/// Runs one `(horizon, seed)` cell of the sweep. The comparator is the
/// hindsight-best fixed policy on the realized contexts.
pub fn run_one(config: &RunConfig, horizon: usize, seed: u64) -> Result<RunOutcome> {
    let mut rngs = RngStreams::new(seed);
    let env_seed = config.env_seed.unwrap_or_else(|| rngs.environment.next_u64());
    let spec = config.env_spec(horizon, env_seed);
    let (oracle, nu) = build_oracle(&spec)?;
    let seeds = rngs.seeds();

    let (trace, schedule) = match config.algo.baseline() {
        None => {
            let schedule = derive_schedule(config.arms, horizon, config.delta)?;
            (run_episode(&oracle, &nu, &schedule, &mut rngs)?, Some(schedule))
        }
        Some(kind) => (run_baseline(kind, &oracle, &nu, horizon, &mut rngs)?, None),
    };
    let pi = best_fixed_policy(&oracle, &trace.realized_contexts())?;
    let cumulative = cumulative_regret(&trace, &oracle, &pi)?;
    let final_regret = *cumulative.last().expect("horizon >= 4");

    let diagnostics = match schedule {
        Some(_) => Some(analyze(&trace, &oracle, &nu, &pi)?),
        None => None,
    };
    let events = diagnostics.as_ref().map(|d| EventSummary {
        epochs: &d.epochs,
        completed_epochs: d.epochs.iter().filter(|e| e.completed).count(),
        frequency_failures: d.epochs.iter().filter(|e| !e.frequency_event).count(),
        loss_failures: d.epochs.iter().filter(|e| !e.loss_event).count(),
        good_event: d.good_event,
        fallbacks_after_first_epoch: d.fallbacks,
    });
    let report = RunReport {
        algo: config.algo,
        env: &spec,
        horizon,
        seed,
        rng: seeds,
        schedule,
        policy: &pi,
        final_regret,
        fallback_rounds: trace.rounds().iter().filter(|r| r.fallback).count(),
        decomposition: diagnostics
            .as_ref()
            .filter(|_| config.emit_decomposition)
            .map(|d| d.ledger),
        events,
    };

    let mut trajectory = String::with_capacity(16 * (horizon / config.thin + 2));
    trajectory.push_str(TRAJECTORY_HEADER);
    trajectory.push('\n');
    for (i, r) in cumulative.iter().enumerate() {
        let t = i + 1;
        if t % config.thin == 0 || t == horizon {
            writeln!(trajectory, "{t},{r}").expect("writing to a String");
        }
    }
    Ok(RunOutcome {
        horizon,
        seed,
        final_regret,
        report: serde_json::to_value(&report)?,
        trajectory,
    })
}

/// Regret percentiles over seeds at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord {
    pub horizon: usize,
    pub percentiles: Percentiles,
    /// Final regrets in seed order.
    pub final_regrets: Vec<f64>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: RunConfig,
    pub rng_algorithm: String,
    pub stream_stride: u64,
    pub seeds: Vec<u64>,
    pub horizons: Vec<HorizonRecord>,
}

impl SweepSummary {
    pub fn algo(&self) -> AlgoKind {
        self.config.algo
    }

    pub fn horizon(&self, t: usize) -> Option<&HorizonRecord> {
        self.horizons.iter().find(|h| h.horizon == t)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs every `(horizon, seed)` pair of `config` and writes the artifacts.
pub fn run_sweep(config: &RunConfig, execution: Execution) -> Result<SweepSummary> {
    config.validate()?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let horizons = config.sorted_horizons();
    let seeds: Vec<u64> = config.seeds().collect();
    let cells: Vec<(usize, u64)> = horizons
        .iter()
        .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
        .collect();

    let mut finals: Vec<Vec<f64>> = vec![Vec::with_capacity(seeds.len()); horizons.len()];
    for batch in cells.chunks(BATCH) {
        let outcomes = execute(config, batch, execution)?;
        for o in outcomes {
            write_file(&out.join(format!("traj_T{}_s{}.csv", o.horizon, o.seed)), &o.trajectory)?;
            write_file(
                &out.join(format!("report_T{}_s{}.json", o.horizon, o.seed)),
                &to_json(&o.report)?,
            )?;
            let i = horizons.binary_search(&o.horizon).expect("known horizon");
            finals[i].push(o.final_regret);
        }
    }

    let summary = SweepSummary {
        config: config.clone(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        stream_stride: STREAM_STRIDE,
        seeds,
        horizons: horizons
            .iter()
            .zip(finals)
            .map(|(&horizon, final_regrets)| HorizonRecord {
                horizon,
                percentiles: Percentiles::of(&final_regrets).expect("n_seeds >= 1"),
                final_regrets,
            })
            .collect(),
    };
    write_file(&out.join(SUMMARY_FILE), &to_json(&serde_json::to_value(&summary)?)?)?;
    Ok(summary)
}

/// Runs a batch of cells, returning outcomes in input order.
fn execute(config: &RunConfig, cells: &[(usize, u64)], execution: Execution) -> Result<Vec<RunOutcome>> {
    match execution {
        Execution::Serial => cells.iter().map(|&(t, s)| run_one(config, t, s)).collect(),
        Execution::Parallel => execute_parallel(config, cells),
    }
}

#[cfg(feature = "parallel")]
fn execute_parallel(config: &RunConfig, cells: &[(usize, u64)]) -> Result<Vec<RunOutcome>> {
    use rayon::prelude::*;
    let work = || -> Result<Vec<RunOutcome>> { cells.par_iter().map(|&(t, s)| run_one(config, t, s)).collect() };
    match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn execute_parallel(config: &RunConfig, cells: &[(usize, u64)]) -> Result<Vec<RunOutcome>> {
    execute(config, cells, Execution::Serial)
}

/// Pretty JSON with sorted keys and a trailing newline.
fn to_json(value: &Value) -> Result<String> {
    // `serde_json::Map` is ordered by key unless `preserve_order` is enabled.
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
