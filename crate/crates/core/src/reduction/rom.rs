use nalgebra::{DMatrix, DVector};

use super::pod::PodBasis;
use crate::error::{Error, Result};
use crate::fem::{damage_coefficients, load_modulation, FomArrays, ParamPoint};
use crate::integrator::{integrate, DenseSystem, GenAlphaParams, StateHistory, TimeGrid};
use crate::linalg::orthonormality_defect;

/// Galerkin-projected arrays, independent of the full dof count.
#[derive(Debug, Clone, PartialEq)]
pub struct RomArrays {
    pub mass: DMatrix<f64>,
    /// `Wᵀ K_p W` for p = 0..=G.
    pub stiffness: Vec<DMatrix<f64>>,
    pub load: DVector<f64>,
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Projects the full-order arrays onto the basis span.
pub fn project(fom: &FomArrays, basis: &PodBasis) -> Result<RomArrays> {
    let w = &basis.vectors;
    if w.nrows() != fom.dof_count() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, model has {} dofs",
            w.nrows(),
            fom.dof_count()
        )));
    }
    if w.ncols() == 0 || orthonormality_defect(w) > 1e-8 {
        return Err(Error::InvalidArgument(
            "basis is empty or its columns are not orthonormal".into(),
        ));
    }
    let wt = w.transpose();
    let mass = symmetrize(&wt * fom.mass.mul_dense(w));
    if mass.clone().cholesky().is_none() {
        return Err(Error::InvalidArgument("reduced mass is not positive definite".into()));
    }
    let stiffness = fom.stiffness.iter().map(|k| symmetrize(&wt * k.mul_dense(w))).collect();
    let load = &wt * DVector::from_column_slice(&fom.load);
    Ok(RomArrays { mass, stiffness, load })
}

impl RomArrays {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn subdomain_count(&self) -> usize {
        self.stiffness.len() - 1
    }

    /// `Σ ψ_p K_R^p`; the cost depends only on the basis size.
    pub fn stiffness_at(&self, class: usize, damage_level: f64) -> Result<DMatrix<f64>> {
        let psi = damage_coefficients(self.subdomain_count(), class, damage_level)?;
        let mut k = DMatrix::zeros(self.dim(), self.dim());
        for (kp, &c) in self.stiffness.iter().zip(&psi) {
            k += kp * c;
        }
        Ok(k)
    }

    /// Reduced trajectory for `point`, starting from rest.
    pub fn solve(&self, point: &ParamPoint, grid: &TimeGrid, params: &GenAlphaParams) -> Result<StateHistory> {
        point.validate(self.subdomain_count())?;
        let k = self.stiffness_at(point.class, point.damage_level)?;
        let system = DenseSystem::new(&self.mass, &k)?;
        let zero = vec![0.0; self.dim()];
        let (amplitude, frequency) = (point.amplitude, point.frequency);
        integrate(
            &system,
            |t, f: &mut [f64]| {
                let s = load_modulation(amplitude, frequency, t);
                for (fi, &li) in f.iter_mut().zip(self.load.iter()) {
                    *fi = s * li;
                }
            },
            &zero,
            &zero,
            grid,
            params,
        )
    }
}

/// `W V_R`, restricted to `rows` of the basis when given.
pub fn lift(basis: &PodBasis, reduced: &StateHistory, rows: Option<&[usize]>) -> StateHistory {
    let w = match rows {
        Some(r) => basis.vectors.select_rows(r.iter()),
        None => basis.vectors.clone(),
    };
    StateHistory {
        dt: reduced.dt,
        displacements: &w * &reduced.displacements,
        velocities: reduced.velocities.as_ref().map(|v| &w * v),
        accelerations: reduced.accelerations.as_ref().map(|a| &w * a),
    }
}

/// Relative errors of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelError {
    /// `‖a − b‖₂ / ‖a‖₂`
    pub relative_l2: f64,
    /// `max |a − b| / max |a|`
    pub relative_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub displacement: Vec<ChannelError>,
    pub acceleration: Vec<ChannelError>,
    /// Pooled relative L2 error over all channels.
    pub displacement_l2: f64,
    pub acceleration_l2: f64,
}

fn channel_errors(reference: &DMatrix<f64>, approx: &DMatrix<f64>) -> (Vec<ChannelError>, f64) {
    let mut out = Vec::with_capacity(reference.nrows());
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..reference.nrows() {
        let (mut d2, mut r2, mut dmax, mut rmax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for l in 0..reference.ncols() {
            let (r, a) = (reference[(i, l)], approx[(i, l)]);
            d2 += (r - a) * (r - a);
            r2 += r * r;
            dmax = dmax.max((r - a).abs());
            rmax = rmax.max(r.abs());
        }
        num += d2;
        den += r2;
        let ratio = |n: f64, d: f64| {
            if d > 0.0 {
                n / d
            } else if n == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        out.push(ChannelError {
            relative_l2: ratio(d2.sqrt(), r2.sqrt()),
            relative_max: ratio(dmax, rmax),
        });
    }
    let pooled = if den > 0.0 {
        (num / den).sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    (out, pooled)
}

/// Compares two histories channel by channel; both must cover the same
/// rows and instants and carry accelerations (stored or differenced).
pub fn reconstruction_report(reference: &StateHistory, approx: &StateHistory) -> Result<ReconstructionReport> {
    if reference.displacements.shape() != approx.displacements.shape() {
        return Err(Error::DimensionMismatch(format!(
            "histories of shape {:?} and {:?}",
            reference.displacements.shape(),
            approx.displacements.shape()
        )));
    }
    let (displacement, displacement_l2) = channel_errors(&reference.displacements, &approx.displacements);
    let ra = crate::integrator::sensor_accelerations(reference)?;
    let aa = crate::integrator::sensor_accelerations(approx)?;
    let (acceleration, acceleration_l2) = channel_errors(&ra, &aa);
    Ok(ReconstructionReport {
        displacement,
        acceleration,
        displacement_l2,
        acceleration_l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_ratios() {
        let r = DMatrix::from_row_slice(1, 3, &[3.0, 0.0, 4.0]);
        let a = DMatrix::from_row_slice(1, 3, &[3.0, 1.0, 4.0]);
        let (e, pooled) = channel_errors(&r, &a);
        assert!((e[0].relative_l2 - 0.2).abs() < 1e-15);
        assert!((e[0].relative_max - 0.25).abs() < 1e-15);
        assert!((pooled - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identical_histories_have_no_error() {
        let h = StateHistory::from_displacements(0.1, DMatrix::from_fn(2, 5, |i, l| (i + l) as f64));
        let rep = reconstruction_report(&h, &h).unwrap();
        assert_eq!(rep.displacement_l2, 0.0);
        assert_eq!(rep.acceleration_l2, 0.0);
        let other = StateHistory::from_displacements(0.1, DMatrix::zeros(2, 4));
        assert!(reconstruction_report(&h, &other).is_err());
    }
}
