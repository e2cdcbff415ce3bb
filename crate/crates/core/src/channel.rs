//! Fading channel models and the per-slot key-generation and transmission
//! rates they induce.
//!
//! With main-channel SNR `X`, eavesdropper SNR `Y` and an independent
//! main-channel SNR `X'` during transmission:
//!
//! * key-generation rate `theta = log2((1 + X + Y) / (1 + Y))`,
//! * transmission rate `xi = log2(1 + X')`.
//!
//! All SNRs are linear; decibel values are converted once at construction.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::quadrature::{self, Estimate};
use crate::{db_to_linear, Error, Result};

/// SNR distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum Fading {
    /// Rayleigh fading, i.e. exponentially distributed SNR.
    Exponential,
}

/// SNR distribution of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    family: Fading,
    mean_snr: f64,
}

impl ChannelModel {
    pub fn new(family: Fading, mean_snr: f64) -> Result<Self> {
        if !(mean_snr > 0.0) || !mean_snr.is_finite() {
            return Err(Error::Domain(format!(
                "mean SNR must be positive and finite, got {mean_snr}"
            )));
        }
        Ok(Self { family, mean_snr })
    }

    pub fn rayleigh(mean_snr: f64) -> Result<Self> {
        Self::new(Fading::Exponential, mean_snr)
    }

    pub fn rayleigh_db(mean_snr_db: f64) -> Result<Self> {
        Self::rayleigh(db_to_linear(mean_snr_db))
    }

    pub fn family(&self) -> Fading {
        self.family
    }

    pub fn mean_snr(&self) -> f64 {
        self.mean_snr
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            Fading::Exponential if x <= 0.0 => 0.0,
            Fading::Exponential => -libm::expm1(-x / self.mean_snr),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        match self.family {
            Fading::Exponential if x <= 0.0 => 1.0,
            Fading::Exponential => libm::exp(-x / self.mean_snr),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.family {
            Fading::Exponential if x < 0.0 => 0.0,
            Fading::Exponential => libm::exp(-x / self.mean_snr) / self.mean_snr,
        }
    }

    /// Value exceeded with probability `tail`.
    pub fn upper_quantile(&self, tail: f64) -> f64 {
        match self.family {
            Fading::Exponential => -self.mean_snr * libm::log(tail),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Fading::Exponential => {
                let exp = Exp::new(1.0 / self.mean_snr).expect("rate is positive and finite");
                exp.sample(rng)
            }
        }
    }
}

/// Main (Alice to Bob) and eavesdropper (Alice to Eve) channels.
///
/// `tx` is the main channel during data transmission. It is drawn from its
/// own distribution, independently of the key-generation phase, and equals
/// `main` unless the transmit power differs between the two phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPair {
    pub main: ChannelModel,
    pub eve: ChannelModel,
    pub tx: ChannelModel,
}

impl LinkPair {
    pub fn new(main: ChannelModel, eve: ChannelModel) -> Self {
        Self { main, eve, tx: main }
    }

    pub fn with_tx(main: ChannelModel, eve: ChannelModel, tx: ChannelModel) -> Self {
        Self { main, eve, tx }
    }

    /// Rayleigh fading on both links, mean SNRs in dB.
    pub fn rayleigh_db(main_db: f64, eve_db: f64) -> Result<Self> {
        Ok(Self::new(
            ChannelModel::rayleigh_db(main_db)?,
            ChannelModel::rayleigh_db(eve_db)?,
        ))
    }
}

/// Which per-slot rate a function refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// Secret-key generation rate `theta`.
    Skg,
    /// Transmission rate `xi`, i.e. key bits consumed by the one-time pad.
    Tx,
}

/// `2^t - 1` without cancellation for small `t`.
fn snr_threshold(t: f64) -> f64 {
    libm::expm1(t * LN_2)
}

fn check_rate(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("rate must be nonnegative, got {t}")));
    }
    Ok(())
}

/// `Pr(theta > t)`.
///
/// For exponential SNRs on both links,
/// `Pr(theta > t) = exp(-u / g_x) / (1 + u g_y / g_x)` with `u = 2^t - 1`.
pub fn skg_rate_survival(link: &LinkPair, t: f64) -> Result<f64> {
    check_rate(t)?;
    if t.is_infinite() {
        return Ok(0.0);
    }
    match (link.main.family, link.eve.family) {
        (Fading::Exponential, Fading::Exponential) => {
            let u = snr_threshold(t);
            let gx = link.main.mean_snr;
            let ratio = link.eve.mean_snr / gx;
            Ok(libm::exp(-u / gx) / (1.0 + u * ratio))
        }
    }
}

/// `F_theta(t) = Pr(theta <= t)`.
pub fn skg_rate_cdf(link: &LinkPair, t: f64) -> Result<f64> {
    Ok(1.0 - skg_rate_survival(link, t)?)
}

/// `F_theta(t)` by one-dimensional quadrature of `Pr(X <= (2^t - 1)(1 + y))`
/// over the eavesdropper SNR. Works for any channel family.
pub fn skg_rate_cdf_quadrature(link: &LinkPair, t: f64) -> Result<Estimate> {
    check_rate(t)?;
    if t == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            abs_error: 0.0,
        });
    }
    if t.is_infinite() {
        return Ok(Estimate {
            value: 1.0,
            abs_error: 0.0,
        });
    }
    let u = snr_threshold(t);
    let eve = link.eve;
    let main = link.main;
    let y_max = eve.upper_quantile(1e-17);
    // The integrand changes on the scale y ~ gx/u where the main-link CDF
    // saturates, which can be far below the eavesdropper's own scale.
    let knee = main.mean_snr / u;
    let mut breaks: Vec<f64> = [0.0, eve.upper_quantile(0.5), eve.upper_quantile(1e-4), y_max]
        .into_iter()
        .chain([knee, 10.0 * knee, 40.0 * knee].into_iter().filter(|&y| y < y_max))
        .collect();
    breaks.sort_by(f64::total_cmp);
    quadrature::integrate_piecewise(|y| main.cdf(u * (1.0 + y)) * eve.pdf(y), &breaks, 1e-12, 1e-15, 400)
}

/// Density of `theta`.
pub fn skg_rate_pdf(link: &LinkPair, t: f64) -> Result<f64> {
    check_rate(t)?;
    match (link.main.family, link.eve.family) {
        (Fading::Exponential, Fading::Exponential) => {
            let u = snr_threshold(t);
            let gx = link.main.mean_snr;
            let a = link.eve.mean_snr / gx;
            let denom = 1.0 + a * u;
            let du = LN_2 * libm::exp2(t);
            Ok(libm::exp(-u / gx) * (denom / gx + a) / (denom * denom) * du)
        }
    }
}

/// `Pr(xi > t)`.
pub fn tx_rate_survival(tx: &ChannelModel, t: f64) -> Result<f64> {
    check_rate(t)?;
    if t.is_infinite() {
        return Ok(0.0);
    }
    Ok(tx.survival(snr_threshold(t)))
}

/// `F_xi(t) = Pr(X' <= 2^t - 1)`.
pub fn tx_rate_cdf(tx: &ChannelModel, t: f64) -> Result<f64> {
    check_rate(t)?;
    if t.is_infinite() {
        return Ok(1.0);
    }
    Ok(tx.cdf(snr_threshold(t)))
}

/// Density of `xi`.
pub fn tx_rate_pdf(tx: &ChannelModel, t: f64) -> Result<f64> {
    check_rate(t)?;
    let u = snr_threshold(t);
    Ok(tx.pdf(u) * LN_2 * libm::exp2(t))
}

/// Survival function of either rate.
pub fn rate_survival(kind: RateKind, link: &LinkPair, t: f64) -> Result<f64> {
    match kind {
        RateKind::Skg => skg_rate_survival(link, t),
        RateKind::Tx => tx_rate_survival(&link.tx, t),
    }
}

/// Density of either rate.
pub fn rate_pdf(kind: RateKind, link: &LinkPair, t: f64) -> Result<f64> {
    match kind {
        RateKind::Skg => skg_rate_pdf(link, t),
        RateKind::Tx => tx_rate_pdf(&link.tx, t),
    }
}

/// Smallest rate `t` with `Pr(rate > t) <= tail`, to within 1e-12 bit.
pub fn rate_upper_quantile(kind: RateKind, link: &LinkPair, tail: f64) -> Result<f64> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::Domain(format!(
            "tail probability must lie in (0, 1), got {tail}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while rate_survival(kind, link, hi)? > tail {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Numerical(format!(
                "rate quantile for tail {tail} exceeds 1e4 bit"
            )));
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if rate_survival(kind, link, mid)? > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Relative tolerance requested from [`rate_moment`].
pub const MOMENT_REL_TOL: f64 = 1e-6;

/// `E[theta^order]` or `E[xi^order]` for `order` in {1, 2}, via
/// `E[R^k] = ∫ k t^(k-1) Pr(R > t) dt`.
pub fn rate_moment(kind: RateKind, link: &LinkPair, order: u32) -> Result<Estimate> {
    if !(1..=2).contains(&order) {
        return Err(Error::Domain(format!("moment order must be 1 or 2, got {order}")));
    }
    let k = order as f64;
    let mut breaks = [
        0.0,
        rate_upper_quantile(kind, link, 0.5)?,
        rate_upper_quantile(kind, link, 1e-4)?,
        rate_upper_quantile(kind, link, 1e-10)?,
        rate_upper_quantile(kind, link, 1e-18)?,
    ];
    breaks.sort_by(f64::total_cmp);
    let integrand = |t: f64| {
        let s = rate_survival(kind, link, t).unwrap_or(0.0);
        k * libm::pow(t, k - 1.0) * s
    };
    let est = quadrature::integrate_piecewise(integrand, &breaks, MOMENT_REL_TOL * 1e-3, 1e-300, 2000)?;
    if est.rel_error() > MOMENT_REL_TOL {
        return Err(Error::Numerical(format!(
            "moment quadrature error {:.3e} exceeds relative tolerance {MOMENT_REL_TOL:.0e}",
            est.rel_error()
        )));
    }
    Ok(est)
}

/// Draws `X`, `Y` and `X'` in that order and returns `(theta, xi)`.
pub fn sample_slot<R: Rng + ?Sized>(link: &LinkPair, rng: &mut R) -> (f64, f64) {
    let theta = sample_skg_rate(link, rng);
    let xi = sample_tx_rate(link, rng);
    (theta, xi)
}

pub fn sample_skg_rate<R: Rng + ?Sized>(link: &LinkPair, rng: &mut R) -> f64 {
    let x = link.main.sample(rng);
    let y = link.eve.sample(rng);
    libm::log2(1.0 + x / (1.0 + y))
}

pub fn sample_tx_rate<R: Rng + ?Sized>(link: &LinkPair, rng: &mut R) -> f64 {
    libm::log2(1.0 + link.tx.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn paper_link() -> LinkPair {
        LinkPair::rayleigh_db(20.0, 10.0).unwrap()
    }

    #[test]
    fn rejects_nonpositive_snr() {
        assert!(ChannelModel::rayleigh(0.0).is_err());
        assert!(ChannelModel::rayleigh(-1.0).is_err());
        assert!(ChannelModel::rayleigh(f64::NAN).is_err());
    }

    #[test]
    fn db_conversion() {
        assert!((ChannelModel::rayleigh_db(20.0).unwrap().mean_snr() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_endpoints() {
        let link = paper_link();
        assert_eq!(skg_rate_cdf(&link, 0.0).unwrap(), 0.0);
        assert_eq!(tx_rate_cdf(&link.tx, 0.0).unwrap(), 0.0);
        assert_eq!(skg_rate_cdf(&link, f64::INFINITY).unwrap(), 1.0);
        assert_eq!(tx_rate_cdf(&link.tx, f64::INFINITY).unwrap(), 1.0);
        assert!(skg_rate_cdf(&link, 200.0).unwrap() == 1.0);
    }

    #[test]
    fn negative_rate_is_domain_error() {
        let link = paper_link();
        assert!(matches!(skg_rate_cdf(&link, -0.1), Err(Error::Domain(_))));
        assert!(matches!(tx_rate_cdf(&link.tx, -1e-9), Err(Error::Domain(_))));
        assert!(matches!(skg_rate_cdf_quadrature(&link, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tx_cdf_at_mean_snr() {
        let link = paper_link();
        let t = libm::log2(101.0);
        let expected = 1.0 - libm::exp(-1.0);
        assert!((tx_rate_cdf(&link.tx, t).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for (gx, gy) in [(100.0, 10.0), (1.0, 1.0), (1000.0, 3.0), (2.0, 500.0)] {
            let link = LinkPair::new(ChannelModel::rayleigh(gx).unwrap(), ChannelModel::rayleigh(gy).unwrap());
            for i in 0..60 {
                let t = i as f64 * 0.25;
                let closed = skg_rate_cdf(&link, t).unwrap();
                let quad = skg_rate_cdf_quadrature(&link, t).unwrap().value;
                assert!(
                    (closed - quad).abs() < 1e-10,
                    "gx={gx} gy={gy} t={t}: {closed} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn densities_match_cdf_differences() {
        let link = paper_link();
        let h = 1e-5;
        for i in 1..40 {
            let t = i as f64 * 0.3;
            let num = (skg_rate_cdf(&link, t + h).unwrap() - skg_rate_cdf(&link, t - h).unwrap()) / (2.0 * h);
            assert!((skg_rate_pdf(&link, t).unwrap() - num).abs() < 1e-7);
            let num = (tx_rate_cdf(&link.tx, t + h).unwrap() - tx_rate_cdf(&link.tx, t - h).unwrap()) / (2.0 * h);
            assert!((tx_rate_pdf(&link.tx, t).unwrap() - num).abs() < 1e-7);
        }
    }

    #[test]
    fn paper_moments() {
        let link = paper_link();
        let theta = rate_moment(RateKind::Skg, &link, 1).unwrap();
        let xi = rate_moment(RateKind::Tx, &link, 1).unwrap();
        assert!((theta.value - 3.31).abs() <= 0.01, "E[theta] = {}", theta.value);
        assert!((xi.value - 5.889).abs() <= 0.005, "E[xi] = {}", xi.value);
        assert!(theta.rel_error() <= MOMENT_REL_TOL);
    }

    #[test]
    fn skg_moment_vanishes_for_strong_eavesdropper() {
        let link = LinkPair::new(
            ChannelModel::rayleigh_db(20.0).unwrap(),
            ChannelModel::rayleigh(1e12).unwrap(),
        );
        let m = rate_moment(RateKind::Skg, &link, 1).unwrap();
        assert!(m.value < 1e-8, "{}", m.value);
    }

    #[test]
    fn moment_order_is_checked() {
        assert!(rate_moment(RateKind::Skg, &paper_link(), 3).is_err());
        assert!(rate_moment(RateKind::Skg, &paper_link(), 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_positive() {
        let link = paper_link();
        let mut a = ChaCha8Rng::seed_from_u64(17);
        let mut b = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let (ta, xa) = sample_slot(&link, &mut a);
            let (tb, xb) = sample_slot(&link, &mut b);
            assert_eq!(ta.to_bits(), tb.to_bits());
            assert_eq!(xa.to_bits(), xb.to_bits());
            assert!(ta > 0.0 && xa > 0.0);
        }
    }
}
