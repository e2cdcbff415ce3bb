//! Infinite-horizon ruin probability of the random transmission scheme.
//!
//! `psi(b)` solves the renewal equation
//!
//! ```text
//! psi(b) = 1 - F_Z(b) + ∫_0^∞ psi(s) f_Z(b - s) ds,    b > 0,
//! ```
//!
//! a Fredholm equation of the second kind. It is discretised by Nyström's
//! method with product integration: `psi` is piecewise linear on the nodes
//! `s_j = j * H` (node 0 carrying the right limit `psi(0+)`), and the
//! kernel is integrated exactly against each hat function through the
//! integrated distribution function. Because the nodes are uniform the
//! matrix `I - K` is banded Toeplitz apart from its first column, and it is
//! an M-matrix, so a banded LU without pivoting is stable.

use alloc::format;
use alloc::vec::Vec;

use crate::banded::BandedMatrix;
use crate::bounds;
use crate::net_usage::GriddedDistribution;
use crate::{Error, Result};

/// Target value of `psi` at the truncation point of the integral.
pub const PSI_TAIL_TOL: f64 = 1e-10;
/// Largest acceptable condition-number estimate of `I - K`.
pub const MAX_CONDITION: f64 = 1e12;
/// Default node spacing in bits.
pub const DEFAULT_NODE_SPACING: f64 = 0.1;

/// Solution of the ruin equation on `[0, s_max]` together with its Nyström
/// interpolant.
#[derive(Debug, Clone)]
pub struct UltimateRuinCurve {
    budgets: Vec<f64>,
    psi: Vec<f64>,
    spacing: f64,
    certain_ruin: bool,
    max_clamp: f64,
    condition: f64,
    dist: Option<GriddedDistribution>,
}

impl UltimateRuinCurve {
    fn certain() -> Self {
        Self {
            budgets: Vec::new(),
            psi: Vec::new(),
            spacing: 0.0,
            certain_ruin: true,
            max_clamp: 0.0,
            condition: 1.0,
            dist: None,
        }
    }

    /// Node budgets; the first node stands for `0+`.
    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    /// `psi` at the nodes.
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// `true` when the drift is nonnegative and ruin is certain for every budget.
    pub fn certain_ruin(&self) -> bool {
        self.certain_ruin
    }

    pub fn max_clamp(&self) -> f64 {
        self.max_clamp
    }

    /// Estimate of the infinity-norm condition number of `I - K`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn node_spacing(&self) -> f64 {
        self.spacing
    }

    pub fn s_max(&self) -> f64 {
        self.budgets.last().copied().unwrap_or(0.0)
    }

    /// `psi(b)` by the Nyström interpolant; 1 for `b <= 0`.
    pub fn eval(&self, b: f64) -> f64 {
        let Some(dist) = &self.dist else { return 1.0 };
        if b <= 0.0 {
            return 1.0;
        }
        let h = self.spacing;
        let n = self.psi.len() - 1;
        // Hat j meets the kernel support only for j*h in (b - z_max - h, b - z_min + h).
        let j_lo = libm::floor((b - dist.z_max()) / h - 1.0).max(1.0) as usize;
        let j_hi = (libm::ceil((b - dist.z_min()) / h + 1.0).max(0.0) as usize).min(n);
        let mut acc = 1.0 - dist.cdf_at(b) + dist.half_hat_weight(b, h) * self.psi[0];
        for j in j_lo..=j_hi {
            acc += dist.hat_weight(b - j as f64 * h, h) * self.psi[j];
        }
        acc.clamp(0.0, 1.0)
    }
}

/// Truncation point of the integral: where the Lundberg bound reaches
/// [`PSI_TAIL_TOL`]. Falls back to `1e4 * Var(Z) / |E[Z]|` when no
/// adjustment coefficient can be found.
pub fn default_s_max(dist: &GriddedDistribution) -> f64 {
    match bounds::adjustment_coefficient(dist) {
        Ok(coef) => -libm::log(PSI_TAIL_TOL) / coef.r_star,
        Err(_) => 1e4 * dist.variance() / dist.mean().abs().max(f64::MIN_POSITIVE),
    }
}

/// Number of nodes giving roughly `spacing` bits between nodes on `[0, s_max]`.
pub fn nodes_for_spacing(s_max: f64, spacing: f64) -> usize {
    (libm::ceil(s_max / spacing) as usize).max(1)
}

/// Solves the ruin equation with `nodes` intervals on `[0, s_max]`.
///
/// For a nonnegative mean net usage the answer `psi = 1` is returned
/// directly with [`UltimateRuinCurve::certain_ruin`] set.
pub fn solve_ultimate_ruin(dist: &GriddedDistribution, nodes: usize, s_max: f64) -> Result<UltimateRuinCurve> {
    if dist.mean() >= 0.0 {
        return Ok(UltimateRuinCurve::certain());
    }
    if nodes == 0 {
        return Err(Error::Config("at least one Nyström interval is required".into()));
    }
    if !(s_max > 0.0) || !s_max.is_finite() {
        return Err(Error::Config(format!("truncation point must be positive, got {s_max}")));
    }
    let n = nodes;
    let h = s_max / n as f64;
    // Kernel weights vanish once |offset| exceeds the support by a node.
    let lower = (libm::ceil(dist.z_max().max(0.0) / h) as usize + 1).min(n);
    let upper = (libm::ceil((-dist.z_min()).max(0.0) / h) as usize + 1).min(n);
    let full: Vec<f64> = (0..=lower + upper)
        .map(|d| dist.hat_weight((d as f64 - upper as f64) * h, h))
        .collect();
    let weight = |offset: i64| -> f64 {
        let d = offset + upper as i64;
        if d >= 0 && (d as usize) < full.len() {
            full[d as usize]
        } else {
            0.0
        }
    };

    let mut a = BandedMatrix::zeros(n + 1, lower, upper);
    for i in 0..=n {
        for j in a.row_span(i) {
            let k = if j == 0 {
                dist.half_hat_weight(i as f64 * h, h)
            } else {
                weight(i as i64 - j as i64)
            };
            let diag = if i == j { 1.0 } else { 0.0 };
            a.set(i, j, diag - k);
        }
    }
    let norm = a.norm_inf();
    let lu = a.factorize()?;
    let rhs: Vec<f64> = (0..=n).map(|i| 1.0 - dist.cdf_at(i as f64 * h)).collect();
    let raw = lu.solve(&rhs);
    // For an M-matrix, max((I - K)^{-1} 1) is the infinity norm of the inverse.
    let inv_norm = lu
        .solve(&alloc::vec![1.0; n + 1])
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let condition = norm * inv_norm;
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Numerical(format!(
            "Nyström system is ill-conditioned (estimate {condition:.3e})"
        )));
    }
    let mut max_clamp: f64 = 0.0;
    let psi: Vec<f64> = raw
        .into_iter()
        .map(|v| {
            let c = v.clamp(0.0, 1.0);
            max_clamp = max_clamp.max((v - c).abs());
            c
        })
        .collect();
    Ok(UltimateRuinCurve {
        budgets: (0..=n).map(|i| i as f64 * h).collect(),
        psi,
        spacing: h,
        certain_ruin: false,
        max_clamp,
        condition,
        dist: Some(dist.clone()),
    })
}
