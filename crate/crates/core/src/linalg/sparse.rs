//! Compressed sparse row storage for the assembled finite-element operators.
//!
//! All matrices coming out of one mesh share the same sparsity pattern, so
//! affine combinations `Σ c_p K_p` are plain value-array combinations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    ///
    /// Every position mentioned by a triplet is kept in the pattern, even if
    /// its summed value is zero. That keeps patterns identical across
    /// per-subdomain assemblies.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            // stable sort keeps the summation order deterministic
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a matrix with `pattern`'s structure and the given values.
    pub fn with_pattern_of(pattern: &CsrMatrix, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a pattern with {} entries",
                values.len(),
                pattern.values.len()
            )));
        }
        Ok(Self {
            values,
            ..pattern.clone()
        })
    }

    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1
            || row_ptr.first() != Some(&0)
            || *row_ptr.last().unwrap() != col_idx.len()
            || col_idx.len() != values.len()
            || row_ptr.windows(2).any(|w| w[0] > w[1])
            || col_idx.iter().any(|&c| c >= ncols)
        {
            return Err(Error::Format("inconsistent CSR arrays".into()));
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                let v = dense[(r, c)];
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(dense.nrows(), dense.ncols(), &triplets).expect("in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Dense product `self * B` for a dense right-hand block.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            for r in 0..self.nrows {
                let mut acc = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.values[k] * col[self.col_idx[k]];
                }
                out[(r, j)] = acc;
            }
        }
        out
    }

    /// `Σ coeffs[p] * mats[p]`; all matrices must share one pattern.
    pub fn linear_combination(mats: &[&CsrMatrix], coeffs: &[f64]) -> Result<CsrMatrix> {
        let first = *mats
            .first()
            .ok_or_else(|| Error::Empty("no matrices to combine".into()))?;
        if mats.len() != coeffs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices, {} coefficients",
                mats.len(),
                coeffs.len()
            )));
        }
        let mut values = vec![0.0; first.values.len()];
        for (m, &c) in mats.iter().zip(coeffs) {
            if !m.same_pattern(first) {
                return Err(Error::DimensionMismatch(
                    "matrices do not share a sparsity pattern".into(),
                ));
            }
            if c == 0.0 {
                continue;
            }
            for (v, &mv) in values.iter_mut().zip(&m.values) {
                *v += c * mv;
            }
        }
        Ok(CsrMatrix {
            values,
            ..first.clone()
        })
    }

    /// Keeps only the rows and columns listed in `keep` (sorted, distinct).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols.max(self.nrows)];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &r in keep {
            for (c, v) in self.row(r) {
                let nc = map[c];
                if nc != usize::MAX {
                    col_idx.push(nc);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows: keep.len(),
            ncols: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst / scale
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]).unwrap();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn submatrix_and_matvec() {
        let d = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 5.0, 2.0, 0.0, 2.0, 6.0]);
        let m = CsrMatrix::from_dense(&d);
        let s = m.submatrix(&[0, 2]);
        assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 6.0]));
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![5.0, 8.0, 8.0]);
        assert_eq!(m.symmetry_defect(), 0.0);
    }

    #[test]
    fn combination_requires_shared_pattern() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        let b = CsrMatrix::from_triplets(2, 2, &[(1, 1, 1.0)]).unwrap();
        assert!(CsrMatrix::linear_combination(&[&a, &b], &[1.0, 1.0]).is_err());
        let c = CsrMatrix::linear_combination(&[&a, &a], &[1.0, 0.5]).unwrap();
        assert_eq!(c.get(0, 0), 1.5);
    }
}
