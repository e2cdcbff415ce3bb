//! Multi-threaded drivers for the Monte Carlo kernels.
//!
//! Trials are cut into fixed-size chunks that do not depend on the number of
//! threads; each chunk is simulated with per-trial streams and the integer
//! tallies are merged, so results are bit-identical for any pool size.

use std::ops::Range;

use keyruin_core::bounds::McEstimate;
use keyruin_core::montecarlo::{self, LatencySummary, LatencyTally, OutageTally, TrajectoryStats};
use keyruin_core::{LinkPair, Result, SchemeSpec};
use rayon::prelude::*;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "KEYRUIN_THREADS";
const CHUNK: u64 = 4096;

/// Trial count, seed and optional thread count of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub trials: u64,
    pub seed: u64,
    /// `None` uses `KEYRUIN_THREADS` or the available parallelism.
    pub threads: Option<usize>,
}

impl McOptions {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            threads: None,
        }
    }

    pub fn with_threads(self, threads: usize) -> Self {
        Self {
            threads: Some(threads),
            ..self
        }
    }
}

fn thread_count(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn chunks(trials: u64) -> Vec<Range<u64>> {
    (0..trials.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(trials))
        .collect()
}

fn run<T, F, M>(opts: &McOptions, work: F, merge: M) -> Result<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    montecarlo::check_trials(opts.trials)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(opts.threads))
        .build()
        .map_err(|e| keyruin_core::Error::Config(format!("cannot start worker threads: {e}")))?;
    let parts: Vec<T> = pool.install(|| chunks(opts.trials).into_par_iter().map(&work).collect());
    // Merge in chunk order; tallies are exact integers so the order is immaterial.
    Ok(parts.into_iter().reduce(merge).expect("at least one chunk"))
}

/// Outage curves for several initial budgets that share trajectories.
pub fn simulate_outage_many(
    link: &LinkPair,
    scheme: SchemeSpec,
    budgets: &[f64],
    t_max: usize,
    opts: &McOptions,
) -> Result<Vec<TrajectoryStats>> {
    scheme.validate()?;
    let tally = run(
        opts,
        |r| montecarlo::outage_chunk(link, scheme, budgets, t_max, opts.seed, r),
        |mut a: OutageTally, b| {
            a.merge(&b).expect("chunks share one shape");
            a
        },
    )?;
    Ok((0..budgets.len())
        .map(|i| TrajectoryStats {
            outage_by_t: tally.outage_by_t(i),
            latency: None,
            trials: tally.trials(),
            seed: opts.seed,
        })
        .collect())
}

/// Outage probability by slot for one initial budget.
pub fn simulate_outage(
    link: &LinkPair,
    scheme: SchemeSpec,
    b0: f64,
    t_max: usize,
    opts: &McOptions,
) -> Result<TrajectoryStats> {
    Ok(simulate_outage_many(link, scheme, &[b0], t_max, opts)?.remove(0))
}

/// Recharge latency (channel realizations of key generation until `b0` bits).
pub fn simulate_recharge_latency(link: &LinkPair, b0: f64, opts: &McOptions) -> Result<LatencySummary> {
    let tally = run(
        opts,
        |r| montecarlo::latency_chunk(link, b0, opts.seed, r),
        |mut a: LatencyTally, b| {
            a.merge(&b);
            a
        },
    )?;
    tally.summary()
}

/// Mean recharge latency with its standard error.
pub fn latency_mc(link: &LinkPair, b0: f64, opts: &McOptions) -> Result<McEstimate> {
    let s = simulate_recharge_latency(link, b0, opts)?;
    Ok(McEstimate {
        value: s.mean,
        std_error: s.std_error,
        trials: s.trials,
    })
}

/// Ruin probability by `horizon` as a finite-horizon stand-in for ultimate ruin.
pub fn ultimate_ruin_mc_estimate(
    link: &LinkPair,
    scheme: SchemeSpec,
    b0: f64,
    horizon: usize,
    opts: &McOptions,
) -> Result<McEstimate> {
    let stats = simulate_outage(link, scheme, b0, horizon, opts)?;
    let (value, std_error) = stats.outage_by_t[horizon];
    Ok(McEstimate {
        value,
        std_error,
        trials: stats.trials,
    })
}
