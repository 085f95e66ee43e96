//! Envelope (skyline) Cholesky factorization for banded SPD systems.
//!
//! Row `i` of the lower factor is stored contiguously from its first
//! structural non-zero column up to the diagonal. With a bandwidth-reducing
//! node order the envelope stays narrow and both the factorization and the
//! triangular solves are linear in the dof count.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "cannot factor a {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let mut first = vec![0usize; n];
        for (i, f) in first.iter_mut().enumerate() {
            *f = a.row(i).map(|(c, _)| c).filter(|&c| c <= i).min().unwrap_or(i);
        }
        // the envelope is symmetric: column j entries above the diagonal
        // widen the rows below them
        for i in 0..n {
            for (c, _) in a.row(i) {
                if c > i && first[c] > i {
                    first[c] = i;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            for (c, v) in a.row(i) {
                if c <= i {
                    data[offset[i] + c - first[i]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offset[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let row_j = offset[j];
                let mut acc = data[row_i + j - fi];
                let li = &data[row_i + start - fi..row_i + j - fi];
                let lj = &data[row_j + start - fj..row_j + j - fj];
                for (x, y) in li.iter().zip(lj) {
                    acc -= x * y;
                }
                let djj = data[row_j + j - fj];
                data[row_i + j - fi] = acc / djj;
            }
            let mut d = data[row_i + i - fi];
            for x in &data[row_i..row_i + i - fi] {
                d -= x * x;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            data[row_i + i - fi] = d.sqrt();
        }
        Ok(Self { n, first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of the lower factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        // L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut acc = b[i];
            for (l, x) in row[..i - fi].iter().zip(&b[fi..i]) {
                acc -= l * x;
            }
            b[i] = acc / row[i - fi];
        }
        // Lᵀ x = y
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let xi = b[i] / row[i - fi];
            b[i] = xi;
            for (l, x) in row[..i - fi].iter().zip(&mut b[fi..i]) {
                *x -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn spd(n: usize) -> DMatrix<f64> {
        // tridiagonal plus a far off-diagonal coupling to exercise the envelope
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 4.0 + i as f64 * 0.1;
            if i + 1 < n {
                a[(i, i + 1)] = -1.0;
                a[(i + 1, i)] = -1.0;
            }
        }
        a[(0, n - 1)] = 0.5;
        a[(n - 1, 0)] = 0.5;
        a
    }

    #[test]
    fn solves_against_dense_reference() {
        let a = spd(12);
        let b = DVector::from_fn(12, |i, _| (i as f64).sin());
        let x_ref = a.clone().cholesky().unwrap().solve(&b);
        let f = SkylineCholesky::factor(&CsrMatrix::from_dense(&a)).unwrap();
        let x = f.solve(b.as_slice());
        for i in 0..12 {
            assert!((x[i] - x_ref[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = SkylineCholesky::factor(&CsrMatrix::from_dense(&a)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1, .. }));
    }
}
