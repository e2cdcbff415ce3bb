//! Globally adaptive Gauss–Kronrod (7/15 point) quadrature on finite intervals.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

// Kronrod abscissae on [0, 1]; odd indices are shared with the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Integral value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
}

impl Estimate {
    pub fn rel_error(&self) -> f64 {
        if self.value == 0.0 {
            self.abs_error
        } else {
            self.abs_error / self.value.abs()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut gauss = fc * WG[3];
    let mut kron = fc * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]`, bisecting the panel with the largest error
/// estimate until `error <= max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "integration limits must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            abs_error: 0.0,
        });
    }
    let mut panels: Vec<Panel> = Vec::with_capacity(64);
    panels.push(kronrod(&f, a, b));
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Estimate {
                value,
                abs_error: error,
            });
        }
        if panels.len() >= max_panels {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not converge: value {value:.6e}, error {error:.3e} after {max_panels} panels"
            )));
        }
        let (worst, _) =
            panels.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, p)| if p.error > acc.1 { (i, p.error) } else { acc },
            );
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        panels.push(kronrod(&f, p.a, mid));
        panels.push(kronrod(&f, mid, p.b));
    }
}

/// Integrates over consecutive breakpoints, summing values and errors.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Estimate> {
    let mut total = Estimate {
        value: 0.0,
        abs_error: 0.0,
    };
    for w in breakpoints.windows(2) {
        let e = integrate(&f, w[0], w[1], rel_tol, abs_tol, max_panels)?;
        total.value += e.value;
        total.abs_error += e.abs_error;
    }
    Ok(total)
}
