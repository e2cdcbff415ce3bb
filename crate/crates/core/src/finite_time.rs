//! Finite-horizon survival of the key budget.
//!
//! With `psi_bar_t(b)` the probability that a budget starting at `b` stays
//! positive through slot `t`,
//!
//! ```text
//! psi_bar_{t+1}(b) = ∫ psi_bar_t(b - z) dF_Z(z),   psi_bar_0(b) = 1{b > 0}.
//! ```
//!
//! Each step is evaluated by product integration: `psi_bar_t` is taken
//! piecewise linear between grid nodes (with its jump at `b = 0` kept
//! exact), and `dF_Z` is integrated against each hat function in closed
//! form, so that `psi_bar_1 = F_Z` on the grid. The resulting discrete
//! convolution runs through an FFT with a kernel spectrum computed once.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::fft::Convolver;
use crate::net_usage::{self, GriddedDistribution};
use crate::{Error, Result};

/// Budget grid and horizon for [`solve_survival`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub b_min: f64,
    pub b_max: f64,
    pub step: f64,
    pub t_max: usize,
}

impl GridSpec {
    pub fn new(b_min: f64, b_max: f64, step: f64, t_max: usize) -> Result<Self> {
        let grid = Self {
            b_min,
            b_max,
            step,
            t_max,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Config(format!(
                "budget step must be positive, got {}",
                self.step
            )));
        }
        if !(self.b_min <= 0.0 && 0.0 < self.b_max) || !self.b_max.is_finite() || !self.b_min.is_finite() {
            return Err(Error::Config(format!(
                "budget grid [{}, {}] must satisfy b_min <= 0 < b_max",
                self.b_min, self.b_max
            )));
        }
        for (name, v) in [("b_min", self.b_min), ("b_max", self.b_max)] {
            let k = v / self.step;
            if (k - libm::round(k)).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "{name} = {v} is not a multiple of the step {}",
                    self.step
                )));
            }
        }
        if self.t_max == 0 {
            return Err(Error::Config("horizon t_max must be at least 1".into()));
        }
        Ok(())
    }

    fn k_min(&self) -> i64 {
        libm::round(self.b_min / self.step) as i64
    }

    fn k_max(&self) -> i64 {
        libm::round(self.b_max / self.step) as i64
    }

    pub fn len(&self) -> usize {
        (self.k_max() - self.k_min() + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn budget(&self, j: usize) -> f64 {
        (self.k_min() + j as i64) as f64 * self.step
    }

    pub fn budgets(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.budget(j)).collect()
    }
}

/// Survival probabilities `psi_bar_t(b)` for `t = 0..=t_max` on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSurface {
    grid: GridSpec,
    values: Vec<Vec<f64>>,
    zero_plus: Vec<f64>,
    max_clamp: f64,
}

impl SurvivalSurface {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Row `t` over the budget grid; zero for budgets `b <= 0`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Right limit `psi_bar_t(0+)`: survival starting from an infinitesimal budget.
    pub fn zero_plus(&self, t: usize) -> f64 {
        self.zero_plus[t]
    }

    /// Largest correction applied when clamping iterates to `[0, 1]`.
    pub fn max_clamp(&self) -> f64 {
        self.max_clamp
    }

    /// `psi_bar_t(b0)`, linear in `b` between grid nodes.
    pub fn survival_at(&self, t: usize, b0: f64) -> Result<f64> {
        let g = &self.grid;
        if t > g.t_max {
            return Err(Error::Range(format!("slot {t} beyond horizon {}", g.t_max)));
        }
        let tol = 1e-9 * g.step;
        if !(b0 >= g.b_min - tol && b0 <= g.b_max + tol) {
            return Err(Error::Range(format!(
                "budget {b0} outside grid [{}, {}]",
                g.b_min, g.b_max
            )));
        }
        if b0 <= 0.0 {
            return Ok(0.0);
        }
        let pos = (b0 / g.step - g.k_min() as f64).min((g.len() - 1) as f64);
        let lo = (libm::floor(pos) as usize).min(g.len() - 2);
        let frac = pos - lo as f64;
        let row = &self.values[t];
        let left = if g.budget(lo) <= 0.0 {
            self.zero_plus[t]
        } else {
            row[lo]
        };
        Ok(left + frac * (row[lo + 1] - left))
    }
}

/// Solves the survival recursion up to `grid.t_max`.
///
/// Beyond `max(b_max, t_max * z_max)` survival through the horizon is
/// certain, so the internal budget axis is capped there and no boundary
/// error is introduced.
pub fn solve_survival(dist: &GriddedDistribution, grid: &GridSpec) -> Result<SurvivalSurface> {
    grid.validate()?;
    let h = dist.step();
    if (grid.step - h).abs() > 1e-12 * h {
        return Err(Error::Config(format!(
            "budget step {} differs from the net-usage step {h}",
            grid.step
        )));
    }
    let k_zmax = dist.offset() + dist.len() as i64 - 1;
    let cap = grid.k_max().max(grid.t_max as i64 * k_zmax.max(0)) + 1;
    let n = cap as usize;

    let (w_first, w) = net_usage::node_hat_weights(dist);
    let (hw_first, hw) = net_usage::node_half_hat_weights(dist);
    let half_hat = |k: i64| {
        let i = k - hw_first;
        if i >= 0 && (i as usize) < hw.len() {
            hw[i as usize]
        } else {
            0.0
        }
    };
    let conv = Convolver::new(&w, n)?;

    // v[0] holds the right limit at b = 0, v[k] the value at k * h.
    let mut v = vec![1.0; n + 1];
    let mut values = Vec::with_capacity(grid.t_max + 1);
    let mut zero_plus = Vec::with_capacity(grid.t_max + 1);
    let mut max_clamp: f64 = 0.0;
    let record = |v: &[f64], values: &mut Vec<Vec<f64>>, zero_plus: &mut Vec<f64>| {
        let row = (0..grid.len())
            .map(|j| {
                let k = grid.k_min() + j as i64;
                if k <= 0 {
                    0.0
                } else {
                    v[k as usize]
                }
            })
            .collect();
        values.push(row);
        zero_plus.push(v[0]);
    };
    record(&v, &mut values, &mut zero_plus);

    for _ in 0..grid.t_max {
        let out = conv.convolve(&v[1..])?;
        let v0 = v[0];
        for k in 0..=cap {
            // Output index j holds sum_i w(k - i) v[i] for k = j + w_first + 1.
            let j = k - w_first - 1;
            let interior = if j >= 0 && (j as usize) < out.values.len() {
                out.values[j as usize]
            } else {
                0.0
            };
            let beyond = net_usage::cumulative_hat_weight(dist, k - cap - 1);
            let raw = interior + half_hat(k) * v0 + beyond;
            let clamped = raw.clamp(0.0, 1.0);
            max_clamp = max_clamp.max((raw - clamped).abs());
            v[k as usize] = clamped;
        }
        record(&v, &mut values, &mut zero_plus);
    }
    Ok(SurvivalSurface {
        grid: *grid,
        values,
        zero_plus,
        max_clamp,
    })
}

/// Outage probability `1 - psi_bar_t(b0)`.
pub fn outage_at(surface: &SurvivalSurface, t: usize, b0: f64) -> Result<f64> {
    Ok(1.0 - surface.survival_at(t, b0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_usage::{build_net_usage, NetUsageGrid, SchemeSpec};
    use crate::LinkPair;

    fn deterministic(step: f64) -> GriddedDistribution {
        let link = LinkPair::rayleigh_db(20.0, 10.0).unwrap();
        build_net_usage(&link, SchemeSpec::Deterministic, NetUsageGrid::with_step(step)).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(0.0, 10.0, 0.01, 5).is_ok());
        assert!(GridSpec::new(1.0, 10.0, 0.01, 5).is_err());
        assert!(GridSpec::new(-1.0, 0.0, 0.01, 5).is_err());
        assert!(GridSpec::new(0.0, 10.005, 0.01, 5).is_err());
        assert!(GridSpec::new(0.0, 10.0, 0.0, 5).is_err());
        assert!(GridSpec::new(0.0, 10.0, 0.01, 0).is_err());
    }

    #[test]
    fn step_mismatch_is_config_error() {
        let d = deterministic(0.05);
        let g = GridSpec::new(0.0, 10.0, 0.01, 2).unwrap();
        assert!(matches!(solve_survival(&d, &g), Err(Error::Config(_))));
    }

    #[test]
    fn first_step_is_cdf() {
        let d = deterministic(0.02);
        let g = GridSpec::new(-2.0, 30.0, 0.02, 1).unwrap();
        let s = solve_survival(&d, &g).unwrap();
        for (j, &b) in g.budgets().iter().enumerate() {
            let expect = if b <= 0.0 { 0.0 } else { d.cdf_at(b) };
            assert!((s.row(1)[j] - expect).abs() <= 1e-9, "b={b}");
        }
        assert!((s.zero_plus(1) - d.cdf_at(0.0)).abs() <= 1e-9);
    }

    #[test]
    fn initial_row_and_empty_budget() {
        let d = deterministic(0.05);
        let g = GridSpec::new(-1.0, 20.0, 0.05, 4).unwrap();
        let s = solve_survival(&d, &g).unwrap();
        for (j, &b) in g.budgets().iter().enumerate() {
            assert_eq!(s.row(0)[j], if b > 0.0 { 1.0 } else { 0.0 });
            if b <= 0.0 {
                for t in 0..=4 {
                    assert_eq!(s.row(t)[j], 0.0);
                }
            }
        }
        assert_eq!(outage_at(&s, 0, 3.0).unwrap(), 0.0);
        assert_eq!(outage_at(&s, 3, -0.5).unwrap(), 1.0);
        assert!(matches!(outage_at(&s, 5, 3.0), Err(Error::Range(_))));
        assert!(matches!(outage_at(&s, 1, 25.0), Err(Error::Range(_))));
    }

    #[test]
    fn surface_is_monotone() {
        let d = deterministic(0.05);
        let g = GridSpec::new(0.0, 40.0, 0.05, 12).unwrap();
        let s = solve_survival(&d, &g).unwrap();
        assert!(s.max_clamp() < 1e-9);
        for t in 0..=12 {
            let row = s.row(t);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            if t > 0 {
                assert!(row.iter().zip(s.row(t - 1)).all(|(a, b)| *a <= b + 1e-12));
            }
        }
    }

    #[test]
    fn example_outage_at_fifteen_slots() {
        let d = deterministic(0.01);
        let g = GridSpec::new(0.0, 60.0, 0.01, 15).unwrap();
        let s = solve_survival(&d, &g).unwrap();
        let psi = outage_at(&s, 15, 50.0).unwrap();
        assert!((psi - 0.11).abs() <= 0.01, "{psi}");
    }

    #[test]
    fn finer_grid_converges() {
        let coarse = solve_survival(&deterministic(0.04), &GridSpec::new(0.0, 30.0, 0.04, 8).unwrap()).unwrap();
        let fine = solve_survival(&deterministic(0.01), &GridSpec::new(0.0, 30.0, 0.01, 8).unwrap()).unwrap();
        for b in [1.0, 5.0, 12.0, 20.0, 28.0] {
            let a = outage_at(&coarse, 8, b).unwrap();
            let c = outage_at(&fine, 8, b).unwrap();
            assert!((a - c).abs() < 2e-3, "b={b}: {a} vs {c}");
        }
    }
}
