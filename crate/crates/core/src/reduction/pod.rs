use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Orthonormal reduction basis with its truncation record.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// M×W, orthonormal columns.
    pub vectors: DMatrix<f64>,
    /// All singular values of the last decomposed matrix, non-increasing.
    pub singular_values: Vec<f64>,
    /// Normalized reconstruction error of the retained basis.
    pub error: f64,
    pub tolerance: f64,
}

impl PodBasis {
    pub fn size(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn dof_count(&self) -> usize {
        self.vectors.nrows()
    }

    /// Identity basis: no reduction at all.
    pub fn identity(n: usize) -> Self {
        Self {
            vectors: DMatrix::identity(n, n),
            singular_values: vec![1.0; n],
            error: 0.0,
            tolerance: 0.0,
        }
    }
}

/// Left singular vectors and singular values, non-increasing.
///
/// Tall matrices go through a QR factorization first so the SVD only sees
/// the small triangular factor.
fn left_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (m, s) = a.shape();
    let (u, sigma) = if m > s {
        let qr = a.clone().qr();
        let (q, r) = qr.unpack();
        let svd = r.svd(true, false);
        (q * svd.u.unwrap(), svd.singular_values)
    } else {
        let svd = a.clone().svd(true, false);
        (svd.u.unwrap(), svd.singular_values)
    };
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let values = order.iter().map(|&i| sigma[i]).collect();
    let vectors = u.select_columns(order.iter());
    (vectors, values)
}

/// Smallest rank whose normalized tail error is below `tolerance`, with
/// that error.
pub fn truncation_rank(singular_values: &[f64], tolerance: f64) -> (usize, f64) {
    let energy: Vec<f64> = singular_values.iter().map(|s| s * s).collect();
    let total: f64 = energy.iter().sum();
    // tail[w] = Σ_{s ≥ w} σ_s², summed from the small end
    let mut tail = vec![0.0; energy.len() + 1];
    for w in (0..energy.len()).rev() {
        tail[w] = tail[w + 1] + energy[w];
    }
    for w in 1..=energy.len() {
        let err = (tail[w] / total).sqrt();
        if err < tolerance {
            return (w, err);
        }
    }
    (energy.len(), 0.0)
}

/// Proper orthogonal decomposition of a snapshot matrix.
pub fn pod(snapshots: &DMatrix<f64>, tolerance: f64) -> Result<PodBasis> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must lie in (0, 1), got {tolerance}"
        )));
    }
    if snapshots.ncols() == 0 || snapshots.nrows() == 0 {
        return Err(Error::Empty("snapshot matrix has no entries".into()));
    }
    if !snapshots.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument("snapshot matrix has non-finite entries".into()));
    }
    if snapshots.iter().all(|&x| x == 0.0) {
        return Err(Error::Empty("all snapshots are zero".into()));
    }
    let (u, sigma) = left_svd(snapshots);
    let (rank, error) = truncation_rank(&sigma, tolerance);
    Ok(PodBasis {
        vectors: u.columns(0, rank).into_owned(),
        singular_values: sigma,
        error,
        tolerance,
    })
}

/// Basis built block by block: each new block is compressed on its own,
/// appended to the running basis, and the union is compressed again.
///
/// Blocks are consumed in order; a failing block aborts with its error.
pub fn incremental_pod<I>(blocks: I, tolerance: f64) -> Result<PodBasis>
where
    I: IntoIterator<Item = Result<DMatrix<f64>>>,
{
    let mut blocks = blocks.into_iter();
    let first = blocks
        .next()
        .ok_or_else(|| Error::Empty("no snapshot blocks".into()))??;
    let mut basis = pod(&first, tolerance)?;
    for block in blocks {
        let local = pod(&block?, tolerance)?;
        let joined = concat_columns(&basis.vectors, &local.vectors);
        basis = pod(&joined, tolerance)?;
    }
    Ok(basis)
}

pub(crate) fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// `‖S − W Wᵀ S‖_F / ‖S‖_F`
pub fn reconstruction_error(basis: &DMatrix<f64>, snapshots: &DMatrix<f64>) -> f64 {
    let projected = basis * (basis.transpose() * snapshots);
    (snapshots - projected).norm() / snapshots.norm()
}

/// Largest per-column `‖s − W Wᵀ s‖ / ‖s‖` over non-zero columns.
pub fn max_column_residual(basis: &DMatrix<f64>, snapshots: &DMatrix<f64>) -> f64 {
    let projected = basis * (basis.transpose() * snapshots);
    let mut worst = 0.0f64;
    for j in 0..snapshots.ncols() {
        let norm = snapshots.column(j).norm();
        if norm > 0.0 {
            worst = worst.max((snapshots.column(j) - projected.column(j)).norm() / norm);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;

    #[test]
    fn rank_one_block() {
        let s = DMatrix::from_fn(6, 1, |i, _| i as f64 + 1.0);
        let snaps = concat_columns(&s, &(&s * 2.0));
        let b = pod(&snaps, 1e-6).unwrap();
        assert_eq!(b.size(), 1);
        assert!(b.error < 1e-12);
    }

    #[test]
    fn zero_snapshots_rejected() {
        assert!(pod(&DMatrix::zeros(4, 3), 1e-3).is_err());
        assert!(pod(&DMatrix::identity(4, 3), 0.0).is_err());
    }

    #[test]
    fn single_block_matches_plain_pod() {
        let s = DMatrix::from_fn(20, 7, |i, j| ((i * 7 + j) as f64).sin());
        let a = pod(&s, 1e-3).unwrap();
        let b = incremental_pod([Ok(s)], 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn repeated_block_adds_nothing() {
        let s = DMatrix::from_fn(30, 8, |i, j| ((i + 1) as f64 * (j + 1) as f64 * 0.1).cos());
        let once = incremental_pod([Ok(s.clone())], 1e-4).unwrap();
        let twice = incremental_pod([Ok(s.clone()), Ok(s)], 1e-4).unwrap();
        assert_eq!(once.size(), twice.size());
        assert!(orthonormality_defect(&twice.vectors) < 1e-10);
    }

    #[test]
    fn wide_matrices_take_the_direct_path() {
        let s = DMatrix::from_fn(4, 9, |i, j| ((i * 3 + j * 5) as f64).cos());
        let b = pod(&s, 1e-8).unwrap();
        assert!(orthonormality_defect(&b.vectors) < 1e-12);
        assert!((reconstruction_error(&b.vectors, &s) - b.error).abs() < 1e-10);
    }
}
