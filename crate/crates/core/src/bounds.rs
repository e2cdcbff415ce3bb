//! Worst-case bounds on outage and ruin.
//!
//! * Finite horizon: `psi_t(b0) <= E[max(S_t, 0)] / b0 <= sqrt(E[S_t^2]) / b0`,
//!   the right side being `sqrt(t Var(Z) + t^2 E[Z]^2) / b0` for i.i.d. slots.
//! * Infinite horizon: `psi(b0) <= exp(-r* b0)` with `r*` the positive root
//!   of `E[exp(r Z)] = 1`.

use alloc::format;

use rand::Rng;

use crate::net_usage::GriddedDistribution;
use crate::{Error, Result};

/// Required accuracy of the defining equation at the returned root.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;

/// Adjustment coefficient `r*` and the residual `|E[exp(r* Z)] - 1|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustmentCoefficient {
    pub r_star: f64,
    pub residual: f64,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
}

/// `ln E[exp(r Z)]` on the grid.
pub fn log_mgf(dist: &GriddedDistribution, r: f64) -> f64 {
    libm::log(dist.mgf(r))
}

/// Positive root of `E[exp(r Z)] = 1`, by bracketing and bisection.
pub fn adjustment_coefficient(dist: &GriddedDistribution) -> Result<AdjustmentCoefficient> {
    let mean = dist.mean();
    if mean >= 0.0 {
        return Err(Error::Precondition(format!(
            "no positive adjustment coefficient: mean net usage {mean:.6} is not negative \
             (transmission probability at or above the critical value)"
        )));
    }
    let excess = |r: f64| dist.mgf(r) - 1.0;
    let mut lo = 1e-8;
    if excess(lo) >= 0.0 {
        return Err(Error::Numerical(format!(
            "drift {mean:.3e} too close to zero to bracket the root"
        )));
    }
    let mut hi = 0.1;
    while excess(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e6 {
            return Err(Error::Numerical("moment generating function never exceeds 1".into()));
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        r = 0.5 * (lo + hi);
        let e = excess(r);
        if e.abs() <= ROOT_RESIDUAL_TOL * 0.5 || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        if e < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
    }
    let residual = excess(r).abs();
    if !(residual <= ROOT_RESIDUAL_TOL) || !r.is_finite() {
        return Err(Error::Numerical(format!(
            "adjustment coefficient residual {residual:.3e}"
        )));
    }
    let truncation_bias = (1.0 - dist.mass()) * libm::exp(r * dist.z_max());
    if truncation_bias > 1e-6 {
        return Err(Error::Numerical(format!(
            "truncated tail may shift the moment generating function by {truncation_bias:.3e}"
        )));
    }
    Ok(AdjustmentCoefficient { r_star: r, residual })
}

/// `exp(-r* b0)`, capped at 1 for nonpositive budgets.
pub fn lundberg_bound(coef: &AdjustmentCoefficient, b0: f64) -> f64 {
    if b0 <= 0.0 {
        1.0
    } else {
        libm::exp(-coef.r_star * b0)
    }
}

fn check_budget(b0: f64) -> Result<()> {
    if !(b0 > 0.0) {
        return Err(Error::Domain(format!("initial budget must be positive, got {b0}")));
    }
    Ok(())
}

/// `sqrt(t Var(Z) + t^2 E[Z]^2) / b0`; may exceed 1.
pub fn bound_psi_hat(dist: &GriddedDistribution, t: usize, b0: f64) -> Result<f64> {
    check_budget(b0)?;
    let t = t as f64;
    let mean = dist.mean();
    Ok(libm::sqrt(t * dist.variance() + t * t * mean * mean) / b0)
}

/// Monte Carlo estimate of `E[max(S_t, 0)] / b0`, drawing slots from the grid.
pub fn bound_psi<R: Rng + ?Sized>(
    dist: &GriddedDistribution,
    t: usize,
    b0: f64,
    trials: u64,
    rng: &mut R,
) -> Result<McEstimate> {
    check_budget(b0)?;
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let s: f64 = (0..t).map(|_| dist.sample(rng)).sum();
        let v = s.max(0.0) / b0;
        sum += v;
        sum_sq += v * v;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        value: mean,
        std_error: libm::sqrt(var / n),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_usage::{build_net_usage, NetUsageGrid, SchemeSpec};
    use crate::LinkPair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(scheme: SchemeSpec) -> GriddedDistribution {
        let link = LinkPair::rayleigh_db(20.0, 10.0).unwrap();
        build_net_usage(&link, scheme, NetUsageGrid::default()).unwrap()
    }

    #[test]
    fn psi_hat_example() {
        let d = dist(SchemeSpec::Deterministic);
        let v = bound_psi_hat(&d, 15, 50.0).unwrap();
        assert!((v - 0.80).abs() <= 0.01, "{v}");
        assert!(bound_psi_hat(&d, 15, 0.0).is_err());
        assert_eq!(bound_psi_hat(&d, 0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_lies_between_outage_and_psi_hat() {
        let d = dist(SchemeSpec::Deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let est = bound_psi(&d, 15, 50.0, 20_000, &mut rng).unwrap();
        assert!(est.value > 0.11 && est.value < 0.80, "{est:?}");
        assert_eq!(bound_psi(&d, 0, 50.0, 10, &mut rng).unwrap().value, 0.0);
        assert!(bound_psi(&d, 3, -1.0, 10, &mut rng).is_err());
    }

    #[test]
    fn adjustment_coefficient_solves_equation() {
        let d = dist(SchemeSpec::RandomTx { tx_prob: 0.1 });
        let c = adjustment_coefficient(&d).unwrap();
        assert!(c.residual <= ROOT_RESIDUAL_TOL);
        assert!((d.mgf(c.r_star) - 1.0).abs() <= ROOT_RESIDUAL_TOL);
        assert!((c.r_star - 0.2889).abs() < 1e-3, "{}", c.r_star);
        assert_eq!(lundberg_bound(&c, 0.0), 1.0);
    }

    #[test]
    fn no_root_for_nonnegative_drift() {
        let d = dist(SchemeSpec::Deterministic);
        assert!(matches!(adjustment_coefficient(&d), Err(Error::Precondition(_))));
    }

    #[test]
    fn root_collapses_towards_criticality() {
        let mut last = f64::INFINITY;
        for p in [0.05, 0.15, 0.25, 0.3, 0.34, 0.355] {
            let r = adjustment_coefficient(&dist(SchemeSpec::RandomTx { tx_prob: p }))
                .unwrap()
                .r_star;
            assert!(r < last);
            last = r;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn log_mgf_is_convex() {
        let d = dist(SchemeSpec::RandomTx { tx_prob: 0.2 });
        let g: alloc::vec::Vec<f64> = (0..100).map(|i| log_mgf(&d, -1.0 + 0.02 * i as f64)).collect();
        assert!(g.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-9));
        assert!(log_mgf(&d, 0.0).abs() < 1e-12);
    }
}
