//! Generalized-α time integration of `M ü + K u = f(t)`.
//!
//! The effective matrix is constant, so it is factored once and every step
//! costs one triangular solve pair plus two matrix–vector products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SkylineCholesky};

/// One-parameter generalized-α family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenAlphaParams {
    /// Spectral radius at infinite frequency.
    pub rho_inf: f64,
    pub alpha_m: f64,
    pub alpha_f: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl GenAlphaParams {
    pub fn new(rho_inf: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho_inf) {
            return Err(Error::InvalidArgument(format!(
                "spectral radius must lie in [0, 1], got {rho_inf}"
            )));
        }
        let alpha_m = (2.0 * rho_inf - 1.0) / (rho_inf + 1.0);
        let alpha_f = rho_inf / (rho_inf + 1.0);
        let gamma = 0.5 - alpha_m + alpha_f;
        let beta = 0.25 * (1.0 - alpha_m + alpha_f).powi(2);
        Ok(Self {
            rho_inf,
            alpha_m,
            alpha_f,
            gamma,
            beta,
        })
    }
}

/// Uniform sampling grid: `steps` instants `l · dt`, l = 1..=steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) || steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs dt > 0 and at least one step (dt = {dt}, steps = {steps})"
            )));
        }
        Ok(Self { dt, steps })
    }

    pub fn time(&self, l: usize) -> f64 {
        l as f64 * self.dt
    }
}

/// Sampled trajectory; column `l` holds the state at `(l + 1) · dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistory {
    pub dt: f64,
    pub displacements: DMatrix<f64>,
    pub velocities: Option<DMatrix<f64>>,
    pub accelerations: Option<DMatrix<f64>>,
}

impl StateHistory {
    pub fn from_displacements(dt: f64, displacements: DMatrix<f64>) -> Self {
        Self {
            dt,
            displacements,
            velocities: None,
            accelerations: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.displacements.nrows()
    }

    pub fn len(&self) -> usize {
        self.displacements.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps only the listed rows of every stored field.
    pub fn rows(&self, rows: &[usize]) -> StateHistory {
        let pick = |m: &DMatrix<f64>| m.select_rows(rows.iter());
        StateHistory {
            dt: self.dt,
            displacements: pick(&self.displacements),
            velocities: self.velocities.as_ref().map(pick),
            accelerations: self.accelerations.as_ref().map(pick),
        }
    }
}

/// Acceleration history: the stored one, else second differences of the
/// displacements (central inside, second-order one-sided at the ends).
pub fn sensor_accelerations(history: &StateHistory) -> Result<DMatrix<f64>> {
    if let Some(a) = &history.accelerations {
        return Ok(a.clone());
    }
    let (n, l) = history.displacements.shape();
    if l < 3 {
        return Err(Error::InvalidArgument(format!(
            "differencing needs at least 3 samples, got {l}"
        )));
    }
    let u = &history.displacements;
    let h2 = history.dt * history.dt;
    let mut a = DMatrix::zeros(n, l);
    for i in 0..n {
        for k in 1..l - 1 {
            a[(i, k)] = (u[(i, k + 1)] - 2.0 * u[(i, k)] + u[(i, k - 1)]) / h2;
        }
        if l >= 4 {
            a[(i, 0)] = (2.0 * u[(i, 0)] - 5.0 * u[(i, 1)] + 4.0 * u[(i, 2)] - u[(i, 3)]) / h2;
            a[(i, l - 1)] = (2.0 * u[(i, l - 1)] - 5.0 * u[(i, l - 2)] + 4.0 * u[(i, l - 3)] - u[(i, l - 4)]) / h2;
        } else {
            a[(i, 0)] = a[(i, 1)];
            a[(i, l - 1)] = a[(i, l - 2)];
        }
    }
    Ok(a)
}

/// Solver for one fixed linear system.
pub trait Factorization {
    fn solve_in_place(&self, b: &mut [f64]);
}

impl Factorization for SkylineCholesky {
    fn solve_in_place(&self, b: &mut [f64]) {
        SkylineCholesky::solve_in_place(self, b)
    }
}

pub struct DenseFactor(nalgebra::Cholesky<f64, nalgebra::Dyn>);

impl Factorization for DenseFactor {
    fn solve_in_place(&self, b: &mut [f64]) {
        let mut v = DVector::from_column_slice(b);
        self.0.solve_mut(&mut v);
        b.copy_from_slice(v.as_slice());
    }
}

/// A linear second-order system `M ü + K u = f`.
pub trait SecondOrderSystem {
    type Factor: Factorization;

    fn dim(&self) -> usize;
    fn apply_mass(&self, x: &[f64], out: &mut [f64]);
    fn apply_stiffness(&self, x: &[f64], out: &mut [f64]);
    /// Factors `c_m M + c_k K`.
    fn factor(&self, c_m: f64, c_k: f64) -> Result<Self::Factor>;
}

/// Sparse full-order system.
pub struct SparseSystem<'a> {
    mass: &'a CsrMatrix,
    stiffness: &'a CsrMatrix,
}

impl<'a> SparseSystem<'a> {
    pub fn new(mass: &'a CsrMatrix, stiffness: &'a CsrMatrix) -> Result<Self> {
        if mass.nrows() != stiffness.nrows() || mass.ncols() != stiffness.ncols() {
            return Err(Error::DimensionMismatch("mass and stiffness shapes differ".into()));
        }
        Ok(Self { mass, stiffness })
    }
}

impl SecondOrderSystem for SparseSystem<'_> {
    type Factor = SkylineCholesky;

    fn dim(&self) -> usize {
        self.mass.nrows()
    }

    fn apply_mass(&self, x: &[f64], out: &mut [f64]) {
        self.mass.mul_vec_into(x, out)
    }

    fn apply_stiffness(&self, x: &[f64], out: &mut [f64]) {
        self.stiffness.mul_vec_into(x, out)
    }

    fn factor(&self, c_m: f64, c_k: f64) -> Result<SkylineCholesky> {
        let a = if self.mass.same_pattern(self.stiffness) {
            CsrMatrix::linear_combination(&[self.mass, self.stiffness], &[c_m, c_k])?
        } else {
            let mut t = Vec::with_capacity(self.mass.nnz() + self.stiffness.nnz());
            for (m, c) in [(self.mass, c_m), (self.stiffness, c_k)] {
                for r in 0..m.nrows() {
                    t.extend(m.row(r).map(|(col, v)| (r, col, c * v)));
                }
            }
            CsrMatrix::from_triplets(self.dim(), self.dim(), &t)?
        };
        SkylineCholesky::factor(&a)
    }
}

/// Small dense system, e.g. a reduced model.
pub struct DenseSystem<'a> {
    mass: &'a DMatrix<f64>,
    stiffness: &'a DMatrix<f64>,
}

impl<'a> DenseSystem<'a> {
    pub fn new(mass: &'a DMatrix<f64>, stiffness: &'a DMatrix<f64>) -> Result<Self> {
        if mass.shape() != stiffness.shape() || mass.nrows() != mass.ncols() {
            return Err(Error::DimensionMismatch("mass and stiffness shapes differ".into()));
        }
        Ok(Self { mass, stiffness })
    }
}

fn dense_mul_into(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let n = a.nrows();
    out.fill(0.0);
    // column-major: accumulate column by column
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = &a.as_slice()[j * n..(j + 1) * n];
        for (o, &v) in out.iter_mut().zip(col) {
            *o += v * xj;
        }
    }
}

impl SecondOrderSystem for DenseSystem<'_> {
    type Factor = DenseFactor;

    fn dim(&self) -> usize {
        self.mass.nrows()
    }

    fn apply_mass(&self, x: &[f64], out: &mut [f64]) {
        dense_mul_into(self.mass, x, out)
    }

    fn apply_stiffness(&self, x: &[f64], out: &mut [f64]) {
        dense_mul_into(self.stiffness, x, out)
    }

    fn factor(&self, c_m: f64, c_k: f64) -> Result<DenseFactor> {
        let a = self.mass * c_m + self.stiffness * c_k;
        a.cholesky().map(DenseFactor).ok_or(Error::NotPositiveDefinite {
            pivot: 0,
            value: f64::NAN,
        })
    }
}

/// Integrates from `(u0, v0)` and records every step.
///
/// `load(t, f)` writes the external force at time `t` into `f`.
pub fn integrate<S: SecondOrderSystem>(
    system: &S,
    mut load: impl FnMut(f64, &mut [f64]),
    u0: &[f64],
    v0: &[f64],
    grid: &TimeGrid,
    params: &GenAlphaParams,
) -> Result<StateHistory> {
    let n = system.dim();
    if u0.len() != n || v0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state of length {}/{} for a {n}-dof system",
            u0.len(),
            v0.len()
        )));
    }
    let dt = grid.dt;
    let GenAlphaParams {
        alpha_m,
        alpha_f,
        gamma,
        beta,
        ..
    } = *params;

    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut f_prev = vec![0.0; n];
    load(0.0, &mut f_prev);

    // initial acceleration from equilibrium
    let mut a = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    system.apply_stiffness(&u, &mut rhs);
    for (r, &f) in rhs.iter_mut().zip(&f_prev) {
        *r = f - *r;
    }
    if rhs.iter().any(|&r| r != 0.0) {
        let mass_factor = system.factor(1.0, 0.0)?;
        mass_factor.solve_in_place(&mut rhs);
        a.copy_from_slice(&rhs);
    }

    let effective = system.factor(1.0 - alpha_m, (1.0 - alpha_f) * beta * dt * dt)?;

    let mut disp = DMatrix::zeros(n, grid.steps);
    let mut vel = DMatrix::zeros(n, grid.steps);
    let mut acc = DMatrix::zeros(n, grid.steps);
    let mut f_next = vec![0.0; n];
    let mut u_mix = vec![0.0; n];
    let mut work = vec![0.0; n];
    for step in 0..grid.steps {
        let t_next = grid.time(step + 1);
        load(t_next, &mut f_next);
        // K[(1 - α_f) u_pred + α_f u_n]
        for i in 0..n {
            let u_pred = u[i] + dt * v[i] + dt * dt * (0.5 - beta) * a[i];
            u_mix[i] = (1.0 - alpha_f) * u_pred + alpha_f * u[i];
        }
        system.apply_stiffness(&u_mix, &mut rhs);
        system.apply_mass(&a, &mut work);
        for i in 0..n {
            let f_mid = (1.0 - alpha_f) * f_next[i] + alpha_f * f_prev[i];
            rhs[i] = f_mid - alpha_m * work[i] - rhs[i];
        }
        effective.solve_in_place(&mut rhs);
        let a_next = &rhs;
        if !a_next.iter().all(|x| x.is_finite()) {
            return Err(Error::Instability {
                step: step + 1,
                context: format!("non-finite acceleration at t = {t_next:.6} s"),
            });
        }
        for i in 0..n {
            u[i] += dt * v[i] + dt * dt * ((0.5 - beta) * a[i] + beta * a_next[i]);
            v[i] += dt * ((1.0 - gamma) * a[i] + gamma * a_next[i]);
            a[i] = a_next[i];
        }
        disp.column_mut(step).copy_from_slice(&u);
        vel.column_mut(step).copy_from_slice(&v);
        acc.column_mut(step).copy_from_slice(&a);
        std::mem::swap(&mut f_prev, &mut f_next);
    }
    Ok(StateHistory {
        dt,
        displacements: disp,
        velocities: Some(vel),
        accelerations: Some(acc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sdof() -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 4.0 * PI * PI),
        )
    }

    #[test]
    fn parameter_family() {
        let p = GenAlphaParams::new(1.0).unwrap();
        assert_eq!((p.alpha_m, p.alpha_f, p.gamma, p.beta), (0.5, 0.5, 0.5, 0.25));
        let p = GenAlphaParams::new(0.0).unwrap();
        assert_eq!((p.alpha_m, p.alpha_f), (-1.0, 0.0));
        assert!(GenAlphaParams::new(1.5).is_err());
    }

    #[test]
    fn rest_stays_at_rest() {
        let (m, k) = sdof();
        let sys = DenseSystem::new(&m, &k).unwrap();
        let h = integrate(
            &sys,
            |_, f| f.fill(0.0),
            &[0.0],
            &[0.0],
            &TimeGrid::new(1e-2, 50).unwrap(),
            &GenAlphaParams::new(1.0).unwrap(),
        )
        .unwrap();
        assert!(h.displacements.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cosine_oscillator() {
        let (m, k) = sdof();
        let sys = DenseSystem::new(&m, &k).unwrap();
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        let h = integrate(
            &sys,
            |_, f| f.fill(0.0),
            &[1.0],
            &[0.0],
            &grid,
            &GenAlphaParams::new(1.0).unwrap(),
        )
        .unwrap();
        assert!((h.displacements[(0, 999)] - 1.0).abs() < 1e-3);
        let a = sensor_accelerations(&h).unwrap();
        for l in 0..1000 {
            let t = grid.time(l + 1);
            let exact = -4.0 * PI * PI * (2.0 * PI * t).cos();
            assert!((a[(0, l)] - exact).abs() < 1e-2 * 4.0 * PI * PI);
        }
    }

    #[test]
    fn differences_vanish_on_linear_motion() {
        let u = DMatrix::from_fn(2, 6, |i, l| (i as f64 + 1.0) * l as f64 * 0.1);
        let a = sensor_accelerations(&StateHistory::from_displacements(0.1, u)).unwrap();
        assert!(a.iter().all(|x| x.abs() < 1e-9));
        let short = StateHistory::from_displacements(0.1, DMatrix::zeros(1, 2));
        assert!(sensor_accelerations(&short).is_err());
    }

    #[test]
    fn indefinite_system_is_reported() {
        let m = DMatrix::from_element(1, 1, -1.0);
        let k = DMatrix::from_element(1, 1, 0.0);
        let sys = DenseSystem::new(&m, &k).unwrap();
        let r = integrate(
            &sys,
            |_, f| f.fill(1.0),
            &[0.0],
            &[0.0],
            &TimeGrid::new(1e-2, 5).unwrap(),
            &GenAlphaParams::new(1.0).unwrap(),
        );
        assert!(matches!(r, Err(Error::NotPositiveDefinite { .. })));
    }
}
