//! Budget needed for a reliability target, and the time to recharge it.
//!
//! `b0^tau(eps)` is the smallest initial budget whose outage probability at
//! slot `tau` does not exceed `eps`. Refilling that budget from key
//! generation alone takes on average `b0 / E[theta]` channel realizations;
//! a deterministic slot holds two realizations (one per block), so the
//! latency in slots is half of that.

use alloc::format;

use crate::channel::{self, LinkPair, RateKind};
use crate::finite_time::SurvivalSurface;
use crate::{Error, Result};

/// Required budget and mean recharge latency for one `(tau, eps)` target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    pub required_budget: f64,
    pub mean_latency_realizations: f64,
    pub mean_latency_slots: f64,
    pub epsilon: f64,
    pub tau: usize,
}

/// Mean recharge latency for a budget `b0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanLatency {
    /// In channel realizations.
    pub realizations: f64,
    /// In deterministic slots (two realizations each).
    pub slots: f64,
}

/// Smallest budget with `psi_tau(b) <= epsilon`, interpolated linearly
/// between the bracketing grid points. Returns 0 when an infinitesimal
/// positive budget already meets the target.
pub fn required_budget(surface: &SurvivalSurface, tau: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "outage target must lie in (0, 1), got {epsilon}"
        )));
    }
    let grid = surface.grid();
    if tau > grid.t_max {
        return Err(Error::Range(format!("slot {tau} beyond horizon {}", grid.t_max)));
    }
    let row = surface.row(tau);
    let budgets = grid.budgets();
    // Start from the right limit at 0; grid points b <= 0 carry no information.
    let mut prev = (0.0, 1.0 - surface.zero_plus(tau));
    if prev.1 <= epsilon {
        return Ok(0.0);
    }
    for (&b, &surv) in budgets.iter().zip(row).filter(|(b, _)| **b > 0.0) {
        let outage = 1.0 - surv;
        if outage <= epsilon {
            let (b_prev, o_prev) = prev;
            let frac = if o_prev > outage {
                (o_prev - epsilon) / (o_prev - outage)
            } else {
                1.0
            };
            return Ok(b_prev + frac * (b - b_prev));
        }
        prev = (b, outage);
    }
    Err(Error::Range(format!(
        "outage {epsilon:e} at slot {tau} not reached within b <= {}; widen the budget grid",
        grid.b_max
    )))
}

/// `b0 / E[theta]` realizations, halved for slots.
pub fn average_latency(link: &LinkPair, b0: f64) -> Result<MeanLatency> {
    if !(b0 >= 0.0) {
        return Err(Error::Domain(format!("budget must be nonnegative, got {b0}")));
    }
    let mean = channel::rate_moment(RateKind::Skg, link, 1)?.value;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Numerical(format!(
            "mean key-generation rate {mean} is not positive"
        )));
    }
    let realizations = b0 / mean;
    Ok(MeanLatency {
        realizations,
        slots: realizations / 2.0,
    })
}

/// Required budget and its mean recharge latency.
pub fn latency_report(surface: &SurvivalSurface, link: &LinkPair, tau: usize, epsilon: f64) -> Result<LatencyReport> {
    let required_budget = required_budget(surface, tau, epsilon)?;
    let mean = average_latency(link, required_budget)?;
    Ok(LatencyReport {
        required_budget,
        mean_latency_realizations: mean.realizations,
        mean_latency_slots: mean.slots,
        epsilon,
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_time::{outage_at, solve_survival, GridSpec};
    use crate::net_usage::{build_net_usage, NetUsageGrid, SchemeSpec};

    fn setup(step: f64, t_max: usize) -> (LinkPair, SurvivalSurface) {
        let link = LinkPair::rayleigh_db(20.0, 10.0).unwrap();
        let d = build_net_usage(&link, SchemeSpec::Deterministic, NetUsageGrid::with_step(step)).unwrap();
        let s = solve_survival(&d, &GridSpec::new(0.0, 60.0, step, t_max).unwrap()).unwrap();
        (link, s)
    }

    #[test]
    fn example_budgets() {
        let (link, s) = setup(0.01, 10);
        let b = required_budget(&s, 5, 0.1).unwrap();
        assert!((b - 19.9).abs() <= 0.3, "{b}");
        let b = required_budget(&s, 5, 1e-5).unwrap();
        assert!((b - 33.3).abs() <= 0.5, "{b}");
        let b = required_budget(&s, 10, 0.1).unwrap();
        assert!((b - 35.8).abs() <= 0.5, "{b}");
        let r = latency_report(&s, &link, 5, 0.1).unwrap();
        assert!((r.mean_latency_realizations - r.required_budget / 3.30837).abs() < 1e-3);
        assert_eq!(r.mean_latency_slots, r.mean_latency_realizations / 2.0);
    }

    #[test]
    fn round_trip_and_monotonicity() {
        let (_, s) = setup(0.05, 8);
        let step = s.grid().step;
        let mut last_tau = 0.0;
        for tau in 1..=8 {
            let mut last_eps = f64::INFINITY;
            for eps in [1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9] {
                let b = required_budget(&s, tau, eps).unwrap();
                let achieved = if b == 0.0 {
                    1.0 - s.zero_plus(tau)
                } else {
                    outage_at(&s, tau, b).unwrap()
                };
                assert!(achieved <= eps + 1e-12, "tau={tau} eps={eps} b={b}");
                if b > step {
                    assert!(outage_at(&s, tau, b - step).unwrap() > eps);
                }
                assert!(b <= last_eps);
                last_eps = b;
            }
            let b = required_budget(&s, tau, 0.1).unwrap();
            assert!(b >= last_tau);
            last_tau = b;
        }
    }

    #[test]
    fn near_certain_outage_needs_no_budget() {
        let (_, s) = setup(0.05, 5);
        assert!(required_budget(&s, 5, 0.999).unwrap() < 1.0);
    }

    #[test]
    fn errors() {
        let (link, s) = setup(0.05, 5);
        let d = build_net_usage(&link, SchemeSpec::Deterministic, NetUsageGrid::with_step(0.05)).unwrap();
        let narrow = solve_survival(&d, &GridSpec::new(0.0, 10.0, 0.05, 5).unwrap()).unwrap();
        assert!(matches!(required_budget(&narrow, 5, 1e-3), Err(Error::Range(_))));
        assert!(matches!(required_budget(&s, 6, 0.1), Err(Error::Range(_))));
        assert!(required_budget(&s, 5, 0.0).is_err());
        assert!(required_budget(&s, 5, 1.0).is_err());
        assert_eq!(average_latency(&link, 0.0).unwrap().realizations, 0.0);
        assert!(average_latency(&link, -1.0).is_err());
    }
}
