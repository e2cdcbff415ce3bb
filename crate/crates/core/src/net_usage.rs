//! Per-slot net usage `Z` (key bits spent minus key bits generated) for the
//! two scheduling schemes, as a sampler and as a distribution on a uniform
//! grid.
//!
//! * Deterministic: every slot holds one key-generation block and one
//!   transmission block, so `Z = xi - theta`.
//! * Random transmission: with probability `p` the slot transmits (`Z = xi`),
//!   otherwise it generates key bits (`Z = -theta`), giving the mixture
//!   `F_Z(z) = (1 - p) Pr(theta >= -z) + p F_xi(z)`.

use alloc::format;
use alloc::vec::Vec;

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;

use crate::channel::{self, LinkPair, RateKind};
use crate::fft::Convolver;
use crate::quadrature;
use crate::{Error, Result};

/// Default grid step in bits.
pub const DEFAULT_STEP: f64 = 0.01;
/// Tail probability left outside the automatically chosen support.
pub const SUPPORT_TAIL: f64 = 1e-9;
/// Allowed deficit of total probability mass on a grid.
pub const MASS_TOL: f64 = 1e-9;
/// Largest probability mass a user-chosen support may cut off.
pub const TRUNC_TOL: f64 = 1e-7;
const MAX_GRID_POINTS: usize = 1 << 22;

/// Scheduling of key generation and transmission blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeSpec {
    /// Key generation followed by transmission in every slot.
    Deterministic,
    /// Each slot transmits with probability `tx_prob`, otherwise generates keys.
    RandomTx { tx_prob: f64 },
}

impl SchemeSpec {
    pub fn random_tx(tx_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tx_prob) {
            return Err(Error::Domain(format!(
                "transmission probability must lie in [0, 1], got {tx_prob}"
            )));
        }
        Ok(Self::RandomTx { tx_prob })
    }

    pub fn tx_prob(&self) -> Option<f64> {
        match *self {
            Self::Deterministic => None,
            Self::RandomTx { tx_prob } => Some(tx_prob),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::RandomTx { tx_prob } = *self {
            Self::random_tx(tx_prob)?;
        }
        Ok(())
    }
}

/// Discretisation of the net-usage axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetUsageGrid {
    pub step: f64,
    /// Explicit `(z_min, z_max)`; `None` picks the `SUPPORT_TAIL` quantiles
    /// of `-theta` and `xi`.
    pub support: Option<(f64, f64)>,
}

impl Default for NetUsageGrid {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            support: None,
        }
    }
}

impl NetUsageGrid {
    pub fn with_step(step: f64) -> Self {
        Self { step, support: None }
    }
}

/// Density and distribution function of a scalar on the uniform grid
/// `z_i = (offset + i) * step`, which always contains `z = 0`.
///
/// Between grid points the distribution function is linear; every derived
/// quantity (interpolation, kernel weights, sampling) uses that convention.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDistribution {
    offset: i64,
    step: f64,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
    // Running integral of the piecewise-linear cdf from z_min.
    cdf_integral: Vec<f64>,
}

impl GriddedDistribution {
    /// Builds a distribution from node values. `offset` is `z_min / step`.
    pub fn from_parts(offset: i64, step: f64, pdf: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        if pdf.len() != cdf.len() || pdf.len() < 2 {
            return Err(Error::Config(format!(
                "pdf and cdf need equal lengths of at least 2, got {} and {}",
                pdf.len(),
                cdf.len()
            )));
        }
        let last = offset + pdf.len() as i64 - 1;
        if offset > 0 || last < 0 {
            return Err(Error::Config(format!(
                "grid [{offset}, {last}] * step does not contain 0"
            )));
        }
        if pdf.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Numerical("density has negative or non-finite values".into()));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) || cdf.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::Numerical(
                "distribution function is not monotone within [0, 1]".into(),
            ));
        }
        let mut cdf_integral = Vec::with_capacity(cdf.len());
        let mut acc = 0.0;
        cdf_integral.push(0.0);
        for w in cdf.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf_integral.push(acc);
        }
        Ok(Self {
            offset,
            step,
            pdf,
            cdf,
            cdf_integral,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.pdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pdf.is_empty()
    }

    /// Grid index of `z_min` in units of `step`.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn z(&self, i: usize) -> f64 {
        (self.offset + i as i64) as f64 * self.step
    }

    pub fn z_min(&self) -> f64 {
        self.z(0)
    }

    pub fn z_max(&self) -> f64 {
        self.z(self.len() - 1)
    }

    pub fn pdf(&self) -> &[f64] {
        &self.pdf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Total probability carried by the grid.
    pub fn mass(&self) -> f64 {
        self.cdf[self.len() - 1]
    }

    /// Trapezoid integral of the density.
    pub fn pdf_mass(&self) -> f64 {
        trapezoid(&self.pdf, self.step)
    }

    /// Distribution function at node `k * step`, with 0 below and 1 above the grid.
    pub fn cdf_node(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 {
            0.0
        } else if i as usize >= self.len() {
            1.0
        } else {
            self.cdf[i as usize]
        }
    }

    fn locate(&self, z: f64) -> Option<(usize, f64)> {
        let pos = z / self.step - self.offset as f64;
        if pos < 0.0 || pos > (self.len() - 1) as f64 {
            return None;
        }
        let i = (libm::floor(pos) as usize).min(self.len() - 2);
        Some((i, pos - i as f64))
    }

    pub fn cdf_at(&self, z: f64) -> f64 {
        match self.locate(z) {
            Some((i, frac)) => self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i]),
            None if z < self.z_min() => 0.0,
            None => 1.0,
        }
    }

    pub fn pdf_at(&self, z: f64) -> f64 {
        match self.locate(z) {
            Some((i, frac)) => self.pdf[i] + frac * (self.pdf[i + 1] - self.pdf[i]),
            None => 0.0,
        }
    }

    /// `∫_{-inf}^{x} F(u) du` for the piecewise-linear distribution function.
    pub fn integrated_cdf(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, frac)) => {
                let s = frac * self.step;
                let f0 = self.cdf[i];
                let f1 = self.cdf[i + 1];
                self.cdf_integral[i] + f0 * s + 0.5 * (f1 - f0) * s * frac
            }
            None if x < self.z_min() => 0.0,
            None => self.cdf_integral[self.len() - 1] + (x - self.z_max()),
        }
    }

    /// `∫ f(u) φ(u - center) du` for the hat `φ` of half-width `width`.
    pub fn hat_weight(&self, center: f64, width: f64) -> f64 {
        let g = |x| self.integrated_cdf(x);
        ((g(center + width) - g(center)) - (g(center) - g(center - width))) / width
    }

    /// Weight of the right half of a hat: `∫_{center-width}^{center} f(u) (u - center + width) / width du`.
    pub fn half_hat_weight(&self, center: f64, width: f64) -> f64 {
        self.cdf_at(center) - (self.integrated_cdf(center) - self.integrated_cdf(center - width)) / width
    }

    // E[g(Z)] against the node masses (F_{k+1} - F_{k-1}) / 2, i.e. the
    // piecewise-linear distribution function integrated against hat functions,
    // the same measure the survival and ruin solvers use.
    fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        let first = self.offset - 1;
        let last = self.offset + self.len() as i64;
        (first..=last)
            .map(|k| 0.5 * (self.cdf_node(k + 1) - self.cdf_node(k - 1)) * g(k as f64 * self.step))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|z| z)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|z| (z - m) * (z - m))
    }

    /// `E[exp(r Z)]`.
    pub fn mgf(&self, r: f64) -> f64 {
        self.expect(|z| libm::exp(r * z))
    }

    /// Inverse-transform draw from the piecewise-linear distribution function.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.mass();
        if u <= self.cdf[0] {
            return self.z_min();
        }
        let hi = self.cdf.partition_point(|&c| c <= u).min(self.len() - 1);
        let lo = hi - 1;
        let span = self.cdf[hi] - self.cdf[lo];
        let frac = if span > 0.0 { (u - self.cdf[lo]) / span } else { 0.0 };
        self.z(lo) + frac * self.step
    }

    /// Re-grids onto `[z_lo, z_hi]` (rounded outward to the step), padding
    /// with zero density and failing if more than `TRUNC_TOL` is cut off.
    pub fn restrict(&self, z_lo: f64, z_hi: f64) -> Result<Self> {
        if !(z_lo < z_hi) {
            return Err(Error::Config(format!("empty support [{z_lo}, {z_hi}]")));
        }
        let k_lo = libm::floor(z_lo / self.step + 1e-9) as i64;
        let k_hi = libm::ceil(z_hi / self.step - 1e-9) as i64;
        if k_lo > 0 || k_hi < 0 {
            return Err(Error::Config(format!("support [{z_lo}, {z_hi}] must contain 0")));
        }
        let lower = self.cdf_node(k_lo);
        if lower > TRUNC_TOL {
            return Err(Error::Truncation {
                tail: "lower",
                mass: lower,
                limit: TRUNC_TOL,
            });
        }
        let upper = 1.0 - self.cdf_node(k_hi);
        if upper > TRUNC_TOL {
            return Err(Error::Truncation {
                tail: "upper",
                mass: upper,
                limit: TRUNC_TOL,
            });
        }
        let (pdf, cdf): (Vec<f64>, Vec<f64>) = (k_lo..=k_hi)
            .map(|k| {
                let i = k - self.offset;
                if i >= 0 && (i as usize) < self.len() {
                    (self.pdf[i as usize], self.cdf[i as usize])
                } else {
                    (0.0, self.cdf_node(k))
                }
            })
            .unzip();
        let mut out = Self::from_parts(k_lo, self.step, pdf, cdf)?;
        out.normalize();
        Ok(out)
    }

    // Rescales so that cdf ends within MASS_TOL of 1 and the density's
    // trapezoid mass equals the cdf span.
    fn normalize(&mut self) {
        let last = self.len() - 1;
        if self.cdf[last] < 1.0 - MASS_TOL {
            let base = self.cdf[0];
            let span = self.cdf[last] - base;
            for c in &mut self.cdf {
                *c = (*c - base) / span;
            }
        }
        let target = self.cdf[last] - self.cdf[0];
        let mass = self.pdf_mass();
        if mass > 0.0 {
            for p in &mut self.pdf {
                *p *= target / mass;
            }
        }
        let cdf = core::mem::take(&mut self.cdf);
        let rebuilt = Self::from_parts(self.offset, self.step, core::mem::take(&mut self.pdf), cdf)
            .expect("normalisation keeps a valid distribution");
        *self = rebuilt;
    }
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => step * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    Ok(())
}

fn grid_count(extent: f64, step: f64) -> Result<usize> {
    let n = libm::ceil(extent / step - 1e-9).max(1.0);
    if n > MAX_GRID_POINTS as f64 {
        return Err(Error::Config(format!(
            "grid with step {step} needs {n} points (limit {MAX_GRID_POINTS})"
        )));
    }
    Ok(n as usize)
}

/// Masses of `theta` on the lattice `i * step`, `i = 0..=n`: the integral of
/// each hat function against `dF_theta` (a half hat at the origin). The
/// lattice variable has the same mean as `theta`, however peaked its density.
fn skg_lattice_masses(link: &LinkPair, n: usize, step: f64) -> Result<Vec<f64>> {
    // cells[i] = ∫ F_theta over [i h, (i + 1) h].
    let cells = (0..=n)
        .map(|i| {
            let a = i as f64 * step;
            let f = |t: f64| channel::skg_rate_cdf(link, t).unwrap_or(1.0);
            quadrature::integrate(f, a, a + step, 1e-12, 1e-15, 64).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..=n)
        .map(|i| {
            let m = if i == 0 { cells[0] } else { cells[i] - cells[i - 1] };
            (m / step).max(0.0)
        })
        .collect())
}

/// Values of `g` at `j * step`, `j = 0..=n`, with the node at 0 holding `at_zero`.
fn tx_nodes(n: usize, step: f64, at_zero: f64, g: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    (0..=n)
        .map(|j| if j == 0 { Ok(at_zero) } else { g(j as f64 * step) })
        .collect()
}

/// Builds the gridded distribution of `Z`.
///
/// The deterministic scheme mixes shifted copies of the law of `xi` over a
/// lattice version of `theta` (one FFT each for density and distribution
/// function); the random scheme evaluates the mixture pointwise.
pub fn build_net_usage(link: &LinkPair, scheme: SchemeSpec, grid: NetUsageGrid) -> Result<GriddedDistribution> {
    check_step(grid.step)?;
    scheme.validate()?;
    let step = grid.step;
    let needs_theta = scheme.tx_prob().is_none_or(|p| p < 1.0);
    let needs_xi = scheme.tx_prob().is_none_or(|p| p > 0.0);
    let n_theta = if needs_theta {
        grid_count(channel::rate_upper_quantile(RateKind::Skg, link, SUPPORT_TAIL)?, step)?
    } else {
        1
    };
    let n_xi = if needs_xi {
        grid_count(channel::rate_upper_quantile(RateKind::Tx, link, SUPPORT_TAIL)?, step)?
    } else {
        1
    };

    let mut dist = match scheme {
        SchemeSpec::Deterministic => {
            // Z = xi - theta with theta on a lattice:
            //   f_Z(k h) = sum_i m_i f_xi((k + i) h),  F_Z(k h) = sum_i m_i F_xi((k + i) h).
            let masses = skg_lattice_masses(link, n_theta, step)?;
            let reversed: Vec<f64> = masses.iter().rev().copied().collect();
            let n = n_xi + n_theta;
            // The density of xi jumps at 0; take the mean of its one-sided limits.
            let f0 = 0.5 * channel::tx_rate_pdf(&link.tx, 0.0)?;
            let f_xi = tx_nodes(n, step, f0, |x| channel::tx_rate_pdf(&link.tx, x))?;
            let cdf_xi = tx_nodes(n, step, 0.0, |x| channel::tx_rate_cdf(&link.tx, x))?;
            let conv = Convolver::new(&reversed, n + 1)?;
            let pdf: Vec<f64> = conv.convolve(&f_xi)?.values[..=n].iter().map(|v| v.max(0.0)).collect();
            let mut cdf: Vec<f64> = conv.convolve(&cdf_xi)?.values[..=n]
                .iter()
                .map(|v| v.clamp(0.0, 1.0))
                .collect();
            // Roundoff must not break monotonicity.
            for i in 1..cdf.len() {
                cdf[i] = cdf[i].max(cdf[i - 1]);
            }
            let mut dist = GriddedDistribution::from_parts(-(n_theta as i64), step, pdf, cdf)?;
            dist.normalize();
            dist
        }
        SchemeSpec::RandomTx { tx_prob: p } => {
            let k_min = -(n_theta as i64);
            let k_max = n_xi as i64;
            let mut pdf = Vec::with_capacity((k_max - k_min + 1) as usize);
            let mut cdf = Vec::with_capacity(pdf.capacity());
            for k in k_min..=k_max {
                let z = k as f64 * step;
                let (f, c) = mixture_at(link, p, z)?;
                pdf.push(f);
                cdf.push(c);
            }
            let mut dist = GriddedDistribution::from_parts(k_min, step, pdf, cdf)?;
            dist.normalize();
            dist
        }
    };
    if let Some((lo, hi)) = grid.support {
        dist = dist.restrict(lo, hi)?;
    }
    Ok(dist)
}

/// Density and distribution function of the random-scheme mixture at `z`.
/// At `z = 0` the density is the mean of its one-sided limits.
fn mixture_at(link: &LinkPair, p: f64, z: f64) -> Result<(f64, f64)> {
    let q = 1.0 - p;
    if z < 0.0 {
        let t = -z;
        Ok((
            q * channel::skg_rate_pdf(link, t)?,
            q * channel::skg_rate_survival(link, t)?,
        ))
    } else if z > 0.0 {
        Ok((
            p * channel::tx_rate_pdf(&link.tx, z)?,
            q + p * channel::tx_rate_cdf(&link.tx, z)?,
        ))
    } else {
        let f = 0.5 * (q * channel::skg_rate_pdf(link, 0.0)? + p * channel::tx_rate_pdf(&link.tx, 0.0)?);
        Ok((f, q))
    }
}

/// Exact mixture distribution function `(1 - p) Pr(theta >= -z) + p F_xi(z)`.
pub fn mixture_cdf(link: &LinkPair, tx_prob: f64, z: f64) -> Result<f64> {
    Ok(mixture_at(link, tx_prob, z)?.1)
}

/// Mean of a gridded net-usage distribution.
pub fn net_usage_mean(dist: &GriddedDistribution) -> f64 {
    dist.mean()
}

/// `E[Z]` from the rate moments, without a grid.
pub fn net_usage_mean_exact(link: &LinkPair, scheme: SchemeSpec) -> Result<f64> {
    let theta = channel::rate_moment(RateKind::Skg, link, 1)?.value;
    let xi = channel::rate_moment(RateKind::Tx, link, 1)?.value;
    Ok(match scheme {
        SchemeSpec::Deterministic => xi - theta,
        SchemeSpec::RandomTx { tx_prob: p } => p * xi - (1.0 - p) * theta,
    })
}

/// Transmission probability `E[theta] / (E[theta] + E[xi])` at which the
/// random scheme has zero drift.
pub fn critical_tx_prob(link: &LinkPair) -> Result<f64> {
    let theta = channel::rate_moment(RateKind::Skg, link, 1)?.value;
    let xi = channel::rate_moment(RateKind::Tx, link, 1)?.value;
    Ok(theta / (theta + xi))
}

/// One draw of `Z`. The random scheme draws the transmission decision first
/// and then exactly one of `xi` or `theta`.
pub fn sample_net_usage<R: Rng + ?Sized>(link: &LinkPair, scheme: SchemeSpec, rng: &mut R) -> f64 {
    match scheme {
        SchemeSpec::Deterministic => {
            let (theta, xi) = channel::sample_slot(link, rng);
            xi - theta
        }
        SchemeSpec::RandomTx { tx_prob } => {
            let transmit = Bernoulli::new(tx_prob).expect("validated probability").sample(rng);
            if transmit {
                channel::sample_tx_rate(link, rng)
            } else {
                -channel::sample_skg_rate(link, rng)
            }
        }
    }
}

/// `(mean, variance)` helper used by reports.
pub fn moments(dist: &GriddedDistribution) -> (f64, f64) {
    (dist.mean(), dist.variance())
}

/// Cumulative hat-weight sums used when the survival function is taken as 1
/// beyond a grid: `sum_{m <= k} hat_weight(m * step)`.
pub(crate) fn cumulative_hat_weight(dist: &GriddedDistribution, k: i64) -> f64 {
    0.5 * (dist.cdf_node(k) + dist.cdf_node(k + 1))
}

/// Hat weights at every node offset `k * step` in `[k_min - 1, k_max + 1]`,
/// returned with the offset of the first entry.
pub(crate) fn node_hat_weights(dist: &GriddedDistribution) -> (i64, Vec<f64>) {
    let k_first = dist.offset() - 1;
    let k_last = dist.offset() + dist.len() as i64;
    let w = (k_first..=k_last)
        .map(|k| 0.5 * (dist.cdf_node(k + 1) - dist.cdf_node(k - 1)))
        .collect();
    (k_first, w)
}

/// Half-hat weights `(F_k - F_{k-1}) / 2` at node offsets, same layout as
/// [`node_hat_weights`].
pub(crate) fn node_half_hat_weights(dist: &GriddedDistribution) -> (i64, Vec<f64>) {
    let k_first = dist.offset() - 1;
    let k_last = dist.offset() + dist.len() as i64;
    let w = (k_first..=k_last)
        .map(|k| 0.5 * (dist.cdf_node(k) - dist.cdf_node(k - 1)))
        .collect();
    (k_first, w)
}
