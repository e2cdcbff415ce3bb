//! Reliability and latency analysis for secret-key budgets that are filled by
//! physical-layer key generation over fading channels and drained by one-time
//! pad encryption.
//!
//! The budget evolves as a random walk `B_t = b0 - S_t` where `S_t` is the sum
//! of per-slot net usages `Z`. This crate computes:
//!
//! * the rate distributions of key generation and data transmission for a
//!   pair of fading links ([`channel`]),
//! * the net-usage distribution for the deterministic and the random
//!   transmission scheme ([`net_usage`]),
//! * finite-horizon outage probabilities through the survival recursion
//!   ([`finite_time`]) and the infinite-horizon ruin probability through a
//!   Fredholm equation of the second kind ([`ultimate_ruin`]),
//! * closed-form worst-case bounds ([`bounds`]) and recharge latency
//!   ([`latency`]),
//! * per-trial Monte Carlo kernels with counter-based random streams
//!   ([`montecarlo`]).
//!
//! The crate is `no_std` and only needs `alloc`. Thread pools, file formats
//! and the command-line front end live in the `keyruin` crate.
#![cfg_attr(not(test), no_std)]
// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod banded;
pub mod bounds;
pub mod channel;
mod error;
pub mod fft;
pub mod finite_time;
pub mod latency;
pub mod montecarlo;
pub mod net_usage;
pub mod quadrature;
pub mod ultimate_ruin;

pub use channel::{ChannelModel, Fading, LinkPair, RateKind};
pub use error::{Error, Result};
pub use finite_time::{GridSpec, SurvivalSurface};
pub use net_usage::{GriddedDistribution, NetUsageGrid, SchemeSpec};
pub use ultimate_ruin::UltimateRuinCurve;

/// Converts a power ratio in decibels to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * libm::log10(linear)
}
