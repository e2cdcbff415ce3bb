//! Radix-2 FFT and zero-padded linear convolution of real sequences.
//!
//! `rustfft` requires `std`, so the transform used by the survival recursion
//! is implemented here. Sizes are powers of two; callers pad.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Precomputed twiddle factors and bit-reversal table for one transform size.
#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    twiddles: Vec<Complex64>,
    reversed: Vec<usize>,
}

impl Fft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Config(format!("FFT length {len} is not a power of two")));
        }
        let bits = len.trailing_zeros();
        let reversed = (0..len)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..len / 2)
            .map(|k| {
                let angle = -2.0 * PI * k as f64 / len as f64;
                Complex64::new(libm::cos(angle), libm::sin(angle))
            })
            .collect();
        Ok(Self {
            len,
            twiddles,
            reversed,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Inverse transform, including the `1/len` scaling.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let scale = 1.0 / self.len as f64;
        for x in data.iter_mut() {
            *x *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.len, "buffer length does not match FFT plan");
        for i in 0..self.len {
            let j = self.reversed[i];
            if i < j {
                data.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.len {
            let half = size / 2;
            let stride = self.len / size;
            for start in (0..self.len).step_by(size) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let u = data[start + k];
                    let v = data[start + k + half] * w;
                    data[start + k] = u + v;
                    data[start + k + half] = u - v;
                }
            }
            size *= 2;
        }
    }
}

/// Linear convolution against a fixed real kernel, reusing the kernel spectrum.
#[derive(Debug, Clone)]
pub struct Convolver {
    plan: Fft,
    kernel_len: usize,
    max_signal_len: usize,
    kernel_spectrum: Vec<Complex64>,
}

/// Output of [`Convolver::convolve`].
#[derive(Debug, Clone)]
pub struct Convolution {
    /// Full linear convolution, `signal.len() + kernel.len() - 1` values.
    pub values: Vec<f64>,
    /// Largest imaginary residue left by the inverse transform.
    pub imag_residue: f64,
}

impl Convolver {
    /// Plans convolutions of `kernel` with signals of up to `max_signal_len` samples.
    pub fn new(kernel: &[f64], max_signal_len: usize) -> Result<Self> {
        if kernel.is_empty() || max_signal_len == 0 {
            return Err(Error::Config("empty convolution operand".into()));
        }
        let full = kernel.len() + max_signal_len - 1;
        let plan = Fft::new(full.next_power_of_two())?;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); plan.len()];
        for (s, &k) in spectrum.iter_mut().zip(kernel) {
            s.re = k;
        }
        plan.forward(&mut spectrum);
        Ok(Self {
            plan,
            kernel_len: kernel.len(),
            max_signal_len,
            kernel_spectrum: spectrum,
        })
    }

    pub fn padded_len(&self) -> usize {
        self.plan.len()
    }

    pub fn convolve(&self, signal: &[f64]) -> Result<Convolution> {
        if signal.is_empty() || signal.len() > self.max_signal_len {
            return Err(Error::Config(format!(
                "signal length {} outside planned range 1..={}",
                signal.len(),
                self.max_signal_len
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.plan.len()];
        for (b, &s) in buf.iter_mut().zip(signal) {
            b.re = s;
        }
        self.plan.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *b *= k;
        }
        self.plan.inverse(&mut buf);
        let n = signal.len() + self.kernel_len - 1;
        // Anything beyond the linear-convolution length must vanish; otherwise
        // the circular transform wrapped around.
        let wrapped = buf[n..].iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        if wrapped > 1e-9 {
            return Err(Error::Numerical(format!(
                "circular convolution aliasing of {wrapped:.3e}"
            )));
        }
        let imag_residue = buf.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        Ok(Convolution {
            values: buf[..n].iter().map(|c| c.re).collect(),
            imag_residue,
        })
    }
}

/// Full linear convolution of two real sequences.
pub fn convolve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    Ok(Convolver::new(b, a.len())?.convolve(a)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Fft::new(12).is_err());
        assert!(Fft::new(1).is_ok());
    }

    #[test]
    fn round_trip_recovers_input() {
        let plan = Fft::new(16).unwrap();
        let orig: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new(i as f64, (i * i) as f64 * 0.1))
            .collect();
        let mut data = orig.clone();
        plan.forward(&mut data);
        plan.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn convolver_rejects_oversized_signal() {
        let c = Convolver::new(&[1.0, 2.0], 3).unwrap();
        assert!(c.convolve(&[1.0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn matches_direct_convolution(
            a in proptest::collection::vec(-10.0f64..10.0, 1..200),
            b in proptest::collection::vec(-10.0f64..10.0, 1..120),
        ) {
            let fast = convolve(&a, &b).unwrap();
            let slow = direct(&a, &b);
            prop_assert_eq!(fast.len(), slow.len());
            for (x, y) in fast.iter().zip(&slow) {
                prop_assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
            }
        }
    }
}
