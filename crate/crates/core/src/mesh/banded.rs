//! Banded LU factorization without pivoting.
//!
//! Mesh systems ordered row-major have half-bandwidth equal to the number of
//! columns. Both the DC Laplacian (grounded) and the AC admittance matrix
//! (positive-definite real part) admit pivot-free elimination.

use num_traits::NumAssign;

use crate::error::{Error, Result};

/// Magnitude used to reject vanishing pivots.
pub trait PivotNorm {
    fn pivot_norm(&self) -> f64;
}

impl PivotNorm for f64 {
    fn pivot_norm(&self) -> f64 {
        self.abs()
    }
}

impl PivotNorm for num_complex::Complex64 {
    fn pivot_norm(&self) -> f64 {
        self.norm()
    }
}

/// Square matrix with `bw` sub- and super-diagonals, stored row by row as
/// `2 * bw + 1` entries centred on the diagonal.
#[derive(Clone, Debug)]
pub struct BandMatrix<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: NumAssign + Copy + PivotNorm> BandMatrix<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![T::zero(); n * (2 * bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || i.abs_diff(j) > self.bw {
            return None;
        }
        Some(i * (2 * self.bw + 1) + (j + self.bw - i))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |s| self.data[s])
    }

    /// Adds `v` at `(i, j)`. Panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.bw));
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.bw));
        self.data[s] = v;
    }

    /// In-place LU factorization; L has unit diagonal.
    pub fn factor(mut self) -> Result<BandLu<T>> {
        let (n, bw) = (self.n, self.bw);
        let scale = self
            .data
            .iter()
            .map(PivotNorm::pivot_norm)
            .fold(0.0, f64::max);
        let tol = scale * 1e-14;
        for k in 0..n {
            let pivot = self.get(k, k);
            if !(pivot.pivot_norm() > tol) {
                return Err(Error::numeric(format!(
                    "zero pivot at node {k} (|pivot| = {:e}); the network is singular or disconnected",
                    pivot.pivot_norm()
                )));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let si = self.slot(i, k).unwrap();
                if self.data[si].is_zero() {
                    continue;
                }
                let l = self.data[si] / pivot;
                self.data[si] = l;
                for j in k + 1..=last {
                    let akj = self.get(k, j);
                    if !akj.is_zero() {
                        let sij = self.slot(i, j).unwrap();
                        self.data[sij] -= l * akj;
                    }
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu<T> {
    m: BandMatrix<T>,
}

impl<T: NumAssign + Copy + PivotNorm> BandLu<T> {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, bw) = (self.m.n, self.m.bw);
        assert_eq!(b.len(), n, "right-hand side length");
        let width = 2 * bw + 1;
        let data = &self.m.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            // row i, column j lives at i * width + j + bw - i
            let row = &data[i * width + bw - i..];
            let mut acc = b[i];
            for j in lo..i {
                acc -= row[j] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = &data[i * width + bw - i..];
            let mut acc = b[i];
            for j in i + 1..=hi {
                acc -= row[j] * b[j];
            }
            b[i] = acc / row[i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] has x = [1 1 1]
        let mut m = BandMatrix::<f64>::zeros(3, 1);
        for i in 0..3 {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
                m.add(i - 1, i, -1.0);
            }
        }
        let x = m.factor().unwrap().solve(&[1.0, 0.0, 1.0]);
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut m = BandMatrix::<f64>::zeros(2, 1);
        m.add(0, 0, 1.0);
        m.add(0, 1, -1.0);
        m.add(1, 0, -1.0);
        m.add(1, 1, 1.0);
        let err = m.factor().unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }

    #[test]
    #[should_panic(expected = "outside band")]
    fn out_of_band_write_panics() {
        let mut m = BandMatrix::<f64>::zeros(4, 1);
        m.add(0, 3, 1.0);
    }
}
