//! Per-trial Monte Carlo kernels for the budget process.
//!
//! Every trial draws from its own ChaCha stream selected by `(seed, trial)`,
//! and tallies are integer histograms whose merge is associative and
//! commutative. Any partition of the trials over threads therefore yields
//! bit-identical statistics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{self, LinkPair};
use crate::net_usage::{self, SchemeSpec};
use crate::{Error, Result};

/// Random stream of trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// First-ruin histograms for several initial budgets sharing trajectories.
///
/// Ruin happens at the end of the first slot `t` with `B_t = b0 - S_t <= 0`;
/// a nonpositive budget counts as ruined at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageTally {
    budgets: Vec<f64>,
    horizon: usize,
    // first_ruin[b][t]: trials first ruined at slot t.
    first_ruin: Vec<Vec<u64>>,
    trials: u64,
    // Budget indices in increasing order of budget.
    order: Vec<usize>,
}

impl OutageTally {
    pub fn new(budgets: &[f64], horizon: usize) -> Self {
        let mut order: Vec<usize> = (0..budgets.len()).collect();
        order.sort_by(|&a, &b| budgets[a].total_cmp(&budgets[b]));
        Self {
            budgets: budgets.to_vec(),
            horizon,
            first_ruin: vec![vec![0; horizon + 1]; budgets.len()],
            trials: 0,
            order,
        }
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Simulates one trajectory up to the horizon.
    pub fn record<R: Rng + ?Sized>(&mut self, link: &LinkPair, scheme: SchemeSpec, rng: &mut R) {
        self.trials += 1;
        // Budgets are ruined in increasing order as the running maximum of S grows.
        let mut next = 0;
        let mut s: f64 = 0.0;
        let mut t = 0;
        loop {
            while next < self.order.len() && self.budgets[self.order[next]] <= s {
                self.first_ruin[self.order[next]][t] += 1;
                next += 1;
            }
            if next == self.order.len() || t == self.horizon {
                break;
            }
            s += net_usage::sample_net_usage(link, scheme, rng);
            t += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.horizon != other.horizon || self.budgets != other.budgets {
            return Err(Error::Config("cannot merge outage tallies of different shapes".into()));
        }
        self.trials += other.trials;
        for (a, b) in self.first_ruin.iter_mut().zip(&other.first_ruin) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// `(probability, standard error)` of ruin by slot `t`, for `t = 0..=horizon`.
    pub fn outage_by_t(&self, budget_index: usize) -> Vec<(f64, f64)> {
        let n = self.trials.max(1) as f64;
        let mut ruined = 0u64;
        self.first_ruin[budget_index]
            .iter()
            .map(|&c| {
                ruined += c;
                let p = ruined as f64 / n;
                (p, libm::sqrt(p * (1.0 - p) / n))
            })
            .collect()
    }
}

/// Slots of key generation needed to accumulate `b0` bits (at least one).
pub fn recharge_trial<R: Rng + ?Sized>(link: &LinkPair, b0: f64, rng: &mut R) -> u64 {
    if b0 <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    let mut t = 0;
    while acc < b0 {
        acc += channel::sample_skg_rate(link, rng);
        t += 1;
    }
    t
}

/// Histogram of recharge latencies in channel realizations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LatencyTally {
    counts: BTreeMap<u64, u64>,
    trials: u64,
}

/// Summary of a latency sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySummary {
    pub mean: f64,
    pub std_error: f64,
    pub q10: u64,
    pub q50: u64,
    pub q90: u64,
    pub min: u64,
    pub trials: u64,
}

impl LatencyTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record<R: Rng + ?Sized>(&mut self, link: &LinkPair, b0: f64, rng: &mut R) {
        self.push(recharge_trial(link, b0, rng));
    }

    pub fn push(&mut self, latency: u64) {
        *self.counts.entry(latency).or_insert(0) += 1;
        self.trials += 1;
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn merge(&mut self, other: &Self) {
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.trials += other.trials;
    }

    fn quantile(&self, q: f64) -> u64 {
        let target = libm::ceil(q * self.trials as f64).max(1.0) as u64;
        let mut acc = 0;
        for (&k, &c) in &self.counts {
            acc += c;
            if acc >= target {
                return k;
            }
        }
        0
    }

    pub fn summary(&self) -> Result<LatencySummary> {
        if self.trials == 0 {
            return Err(Error::Precondition("no latency trials recorded".into()));
        }
        let (sum, sum_sq) = self.counts.iter().fold((0u128, 0u128), |(s, q), (&k, &c)| {
            (s + (k * c) as u128, q + (k as u128) * (k as u128) * c as u128)
        });
        let n = self.trials as f64;
        let mean = sum as f64 / n;
        let var = if self.trials > 1 {
            ((sum_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(LatencySummary {
            mean,
            std_error: libm::sqrt(var / n),
            q10: self.quantile(0.1),
            q50: self.quantile(0.5),
            q90: self.quantile(0.9),
            min: self.counts.keys().next().copied().unwrap_or(0),
            trials: self.trials,
        })
    }
}

/// Monte Carlo outcome for one initial budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    /// `(probability, standard error)` of ruin by slot `t`, `t = 0..=t_max`.
    pub outage_by_t: Vec<(f64, f64)>,
    pub latency: Option<LatencySummary>,
    pub trials: u64,
    pub seed: u64,
}

/// Runs trials `range` of `seed` serially into a fresh tally.
pub fn outage_chunk(
    link: &LinkPair,
    scheme: SchemeSpec,
    budgets: &[f64],
    horizon: usize,
    seed: u64,
    range: core::ops::Range<u64>,
) -> OutageTally {
    let mut tally = OutageTally::new(budgets, horizon);
    for trial in range {
        tally.record(link, scheme, &mut trial_rng(seed, trial));
    }
    tally
}

/// Runs latency trials `range` of `seed` serially into a fresh tally.
pub fn latency_chunk(link: &LinkPair, b0: f64, seed: u64, range: core::ops::Range<u64>) -> LatencyTally {
    let mut tally = LatencyTally::new();
    for trial in range {
        tally.record(link, b0, &mut trial_rng(seed, trial));
    }
    tally
}

/// Checks that a Monte Carlo request is well formed.
pub fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config(format!("trial count must be at least 1, got {trials}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link() -> LinkPair {
        LinkPair::rayleigh_db(20.0, 10.0).unwrap()
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = trial_rng(1, 0).random();
        let b: u64 = trial_rng(1, 1).random();
        let c: u64 = trial_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn chunking_does_not_change_results() {
        let budgets = [20.0, 5.0, 0.0];
        let whole = outage_chunk(&link(), SchemeSpec::Deterministic, &budgets, 10, 9, 0..500);
        let mut parts = outage_chunk(&link(), SchemeSpec::Deterministic, &budgets, 10, 9, 300..500);
        parts
            .merge(&outage_chunk(
                &link(),
                SchemeSpec::Deterministic,
                &budgets,
                10,
                9,
                0..300,
            ))
            .unwrap();
        assert_eq!(whole, parts);
    }

    #[test]
    fn zero_budget_is_ruined_immediately() {
        let tally = outage_chunk(&link(), SchemeSpec::Deterministic, &[0.0, 3.0], 4, 1, 0..50);
        let curve = tally.outage_by_t(0);
        assert_eq!(curve[0].0, 1.0);
        assert_eq!(curve[1], (1.0, 0.0));
        let other = tally.outage_by_t(1);
        assert_eq!(other[0].0, 0.0);
        assert!(other.windows(2).all(|w| w[1].0 >= w[0].0));
    }

    #[test]
    fn pure_schemes() {
        // Only spending: every trajectory is eventually ruined.
        let spend = outage_chunk(&link(), SchemeSpec::RandomTx { tx_prob: 1.0 }, &[1.0], 50, 2, 0..200);
        assert_eq!(spend.outage_by_t(0)[50].0, 1.0);
        // Only generating: never ruined.
        let gen = outage_chunk(&link(), SchemeSpec::RandomTx { tx_prob: 0.0 }, &[1e-6], 50, 2, 0..200);
        assert_eq!(gen.outage_by_t(0)[50].0, 0.0);
    }

    #[test]
    fn merge_rejects_other_shapes() {
        let mut a = OutageTally::new(&[1.0], 3);
        assert!(a.merge(&OutageTally::new(&[1.0], 4)).is_err());
    }

    #[test]
    fn latency_summary() {
        let tally = latency_chunk(&link(), 10.0, 5, 0..2000);
        let s = tally.summary().unwrap();
        assert!(s.min >= 1);
        assert!(s.q10 as f64 <= s.mean && s.mean <= s.q90 as f64);
        assert!(s.q10 <= s.q50 && s.q50 <= s.q90);
        assert_eq!(recharge_trial(&link(), 0.0, &mut trial_rng(0, 0)), 1);
        assert!(LatencyTally::new().summary().is_err());
    }

    #[test]
    fn latency_merge_is_order_independent() {
        let mut a = latency_chunk(&link(), 7.0, 3, 0..100);
        a.merge(&latency_chunk(&link(), 7.0, 3, 100..200));
        let mut b = latency_chunk(&link(), 7.0, 3, 100..200);
        b.merge(&latency_chunk(&link(), 7.0, 3, 0..100));
        assert_eq!(a, b);
        assert_eq!(a, latency_chunk(&link(), 7.0, 3, 0..200));
    }
}
