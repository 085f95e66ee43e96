//! Lowest natural frequencies by subspace iteration.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{generalized_eigen, CsrMatrix, SkylineCholesky};

const DENSE_LIMIT: usize = 120;
const MAX_ITERATIONS: usize = 300;
const TOLERANCE: f64 = 1e-12;

fn to_hz(lambda: f64) -> f64 {
    lambda.max(0.0).sqrt() / (2.0 * PI)
}

/// The `count` lowest frequencies (Hz) of `K v = λ M v`, ascending.
pub fn natural_frequencies(mass: &CsrMatrix, stiffness: &CsrMatrix, count: usize) -> Result<Vec<f64>> {
    let n = mass.nrows();
    if stiffness.nrows() != n || count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "cannot extract {count} modes from a {n}-dof system"
        )));
    }
    if n <= DENSE_LIMIT {
        let (values, _) = generalized_eigen(&stiffness.to_dense(), &mass.to_dense())?;
        return Ok(values.iter().take(count).map(|&l| to_hz(l)).collect());
    }

    let q = n.min((2 * count).max(count + 8));
    let factor = SkylineCholesky::factor(stiffness)?;
    // starting block: the mass diagonal plus seeded random vectors
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, q, |_, _| rng.random::<f64>() - 0.5);
    for i in 0..n {
        x[(i, 0)] = mass.get(i, i);
    }
    let mut previous = vec![f64::INFINITY; count];
    for _ in 0..MAX_ITERATIONS {
        let mx = mass.mul_dense(&x);
        let mut y = mx;
        for mut col in y.column_iter_mut() {
            factor.solve_in_place(col.as_mut_slice());
        }
        let ky = stiffness.mul_dense(&y);
        let my = mass.mul_dense(&y);
        let kr = y.transpose() * ky;
        let mr = y.transpose() * my;
        let (values, vectors) = generalized_eigen(&kr, &mr)?;
        x = y * vectors;
        let current: Vec<f64> = values.iter().take(count).copied().collect();
        let converged = current
            .iter()
            .zip(&previous)
            .all(|(c, p)| ((c - p) / c).abs() < TOLERANCE);
        if converged {
            return Ok(current.into_iter().map(to_hz).collect());
        }
        previous = current;
    }
    Err(Error::NoConvergence {
        what: "subspace iteration".into(),
        iterations: MAX_ITERATIONS,
    })
}
