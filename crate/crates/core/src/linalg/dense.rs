use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `K x = λ M x` for symmetric `K` and SPD `M` (small, dense).
///
/// Eigenvalues are returned in ascending order with `M`-orthonormal vectors.
pub fn generalized_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    if k.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch("generalized eigenproblem shapes".into()));
    }
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        pivot: 0,
        value: f64::NAN,
    })?;
    let l = chol.l();
    // C = L⁻¹ K L⁻ᵀ
    let linv_k = l
        .solve_lower_triangular(k)
        .ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
    let c = l
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut y = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        y.set_column(dst, &eig.eigenvectors.column(src));
    }
    // x = L⁻ᵀ y
    let x = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
    Ok((values, x))
}

/// `max |WᵀW − I|`
pub fn orthonormality_defect(w: &DMatrix<f64>) -> f64 {
    let g = w.transpose() * w;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
