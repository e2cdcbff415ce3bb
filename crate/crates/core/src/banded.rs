//! Banded matrices and LU factorisation without pivoting.
//!
//! Only suitable for matrices where elimination without row exchanges is
//! stable, e.g. diagonally dominant ones such as `I - K` with a substochastic
//! nonnegative `K`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Square matrix with `lower` sub-diagonals and `upper` super-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    // Row-major: row i stores columns i - lower ..= i + upper.
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        let lower = lower.min(n.saturating_sub(1));
        let upper = upper.min(n.saturating_sub(1));
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    pub fn in_band(&self, row: usize, col: usize) -> bool {
        row < self.n && col < self.n && col + self.lower >= row && col <= row + self.upper
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if self.in_band(row, col) {
            self.data[row * self.width() + col + self.lower - row]
        } else {
            0.0
        }
    }

    /// Sets an element; panics outside the band.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(self.in_band(row, col), "({row}, {col}) outside band");
        let w = self.width();
        self.data[row * w + col + self.lower - row] = value;
    }

    /// Columns of `row` that lie inside the band.
    pub fn row_span(&self, row: usize) -> core::ops::RangeInclusive<usize> {
        row.saturating_sub(self.lower)..=(row + self.upper).min(self.n - 1)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row_span(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_span(i).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// In-place Doolittle factorisation without pivoting.
    pub fn factorize(mut self) -> Result<BandedLu> {
        let w = self.width();
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);
        for k in 0..self.n {
            let pivot = self.data[k * w + self.lower];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::Numerical(format!("zero pivot {pivot:.3e} at row {k}")));
            }
            let last_row = (k + self.lower).min(self.n - 1);
            let last_col = (k + self.upper).min(self.n - 1);
            for i in k + 1..=last_row {
                let ik = i * w + k + self.lower - i;
                let factor = self.data[ik] / pivot;
                self.data[ik] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let kj = self.data[k * w + j + self.lower - k];
                    self.data[i * w + j + self.lower - i] -= factor * kj;
                }
            }
        }
        Ok(BandedLu { lu: self })
    }
}

/// Packed `L` (unit diagonal) and `U` factors.
#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = &self.lu;
        assert_eq!(rhs.len(), m.n);
        let mut x = rhs.to_vec();
        for i in 0..m.n {
            let lo = i.saturating_sub(m.lower);
            let acc: f64 = (lo..i).zip(&x[lo..i]).map(|(j, xj)| m.get(i, j) * xj).sum();
            x[i] -= acc;
        }
        for i in (0..m.n).rev() {
            let hi = (i + m.upper).min(m.n - 1);
            let acc: f64 = (i + 1..=hi).zip(&x[i + 1..=hi]).map(|(j, xj)| m.get(i, j) * xj).sum();
            x[i] = (x[i] - acc) / m.get(i, i);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(a: &BandedMatrix, x: &[f64]) -> Vec<f64> {
        let n = a.dim();
        (0..n).map(|i| (0..n).map(|j| a.get(i, j) * x[j]).sum()).collect()
    }

    #[test]
    fn tridiagonal_solve() {
        let n = 5;
        let mut a = BandedMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.set(i, i, 4.0);
            if i > 0 {
                a.set(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.set(i, i + 1, -1.0);
            }
        }
        let x_true = [1.0, -2.0, 3.0, 0.5, 2.0];
        let b = a.mul_vec(&x_true);
        let x = a.factorize().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = BandedMatrix::zeros(3, 1, 1);
        assert!(matches!(a.factorize(), Err(Error::Numerical(_))));
    }

    #[test]
    #[should_panic]
    fn set_outside_band_panics() {
        BandedMatrix::zeros(4, 1, 0).set(0, 2, 1.0);
    }

    proptest! {
        // Diagonally dominant systems solve accurately without pivoting.
        #[test]
        fn dominant_band_solves(
            n in 1usize..40,
            lower in 0usize..5,
            upper in 0usize..7,
            entries in proptest::collection::vec(-1.0f64..1.0, 40 * 13),
            x_true in proptest::collection::vec(-5.0f64..5.0, 40),
        ) {
            let mut a = BandedMatrix::zeros(n, lower, upper);
            for i in 0..n {
                let mut off = 0.0;
                for j in a.row_span(i) {
                    if j != i {
                        let v = entries[(i * 13 + j % 13) % entries.len()];
                        a.set(i, j, v);
                        off += v.abs();
                    }
                }
                a.set(i, i, off + 1.0);
            }
            let x_true = &x_true[..n];
            let b = dense_mul(&a, x_true);
            let x = a.factorize().unwrap().solve(&b);
            for (u, v) in x.iter().zip(x_true) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
