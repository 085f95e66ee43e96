//! Latin hypercube sampling of the operating conditions and discrete
//! sampling of the damage class.
//!
//! Every random draw comes from a ChaCha stream identified by
//! `(seed, purpose, index)`, so parallel consumers see the same numbers
//! regardless of scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::ParamPoint;

/// Independent stream `index` of family `purpose` under `seed`.
pub fn stream(seed: u64, purpose: u32, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | index as u64);
    rng
}

/// Stream families; one per kind of random draw.
pub mod purpose {
    pub const LHS: u32 = 1;
    pub const DAMAGE: u32 = 2;
    pub const NOISE: u32 = 3;
    pub const SHUFFLE: u32 = 4;
    pub const INIT: u32 = 5;
}

/// A uniformly distributed continuous parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformDim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl UniformDim {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            lo,
            hi,
        }
    }
}

/// Continuous dimensions sampled by LHS plus the damage-class pdf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub dims: Vec<UniformDim>,
    /// Probability of each damage class 0..=G.
    pub damage_pdf: Vec<f64>,
    pub seed: u64,
}

pub const AMPLITUDE: &str = "amplitude";
pub const FREQUENCY: &str = "frequency";
pub const DAMAGE_LEVEL: &str = "damage_level";

impl ParamSpace {
    /// Amplitude (Pa), load frequency (Hz) and damage level, in that order.
    pub fn portal(
        amplitude: (f64, f64),
        frequency: (f64, f64),
        damage_level: (f64, f64),
        damage_pdf: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let space = Self {
            dims: vec![
                UniformDim::new(AMPLITUDE, amplitude.0, amplitude.1),
                UniformDim::new(FREQUENCY, frequency.0, frequency.1),
                UniformDim::new(DAMAGE_LEVEL, damage_level.0, damage_level.1),
            ],
            damage_pdf,
            seed,
        };
        space.validate()?;
        Ok(space)
    }

    /// Number of damage subdomains G.
    pub fn subdomain_count(&self) -> usize {
        self.damage_pdf.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Empty("parameter space has no continuous dimension".into()));
        }
        for d in &self.dims {
            // lo == hi pins a parameter, which the damage-level sweeps rely on
            if !(d.lo.is_finite() && d.hi.is_finite() && d.lo <= d.hi) {
                return Err(Error::config(
                    d.name.clone(),
                    format!("bounds must be finite with lo <= hi, got [{}, {}]", d.lo, d.hi),
                ));
            }
        }
        validate_pdf(&self.damage_pdf)
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.dims
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| Error::config(name, "missing parameter dimension"))
    }

    /// `count` points: LHS for the continuous block, independent class
    /// draws, and zero damage for the undamaged class.
    pub fn sample_points(&self, count: usize) -> Result<Vec<ParamPoint>> {
        let classes: Vec<usize> = (0..count)
            .map(|i| {
                let mut rng = stream(self.seed, purpose::DAMAGE, i as u32);
                sample_damage(&self.damage_pdf, &mut rng)
            })
            .collect::<Result<_>>()?;
        self.points_with_classes(&classes)
    }

    /// Like [`sample_points`](Self::sample_points) with prescribed classes.
    pub fn points_with_classes(&self, classes: &[usize]) -> Result<Vec<ParamPoint>> {
        self.validate()?;
        let (ia, jf, kd) = (
            self.index_of(AMPLITUDE)?,
            self.index_of(FREQUENCY)?,
            self.index_of(DAMAGE_LEVEL)?,
        );
        let table = lhs(self, classes.len())?;
        Ok(classes
            .iter()
            .zip(&table)
            .map(|(&class, row)| ParamPoint {
                class,
                amplitude: row[ia],
                frequency: row[jf],
                damage_level: if class == 0 { 0.0 } else { row[kd] },
            })
            .collect())
    }
}

fn validate_pdf(pdf: &[f64]) -> Result<()> {
    if pdf.is_empty() {
        return Err(Error::config("damage_probabilities", "empty probability vector"));
    }
    if pdf.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(Error::config(
            "damage_probabilities",
            "probabilities must be non-negative",
        ));
    }
    let total: f64 = pdf.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(
            "damage_probabilities",
            format!("probabilities sum to {total}, not 1"),
        ));
    }
    Ok(())
}

/// Latin hypercube design: `count` rows, one column per dimension.
///
/// Each dimension gets one sample per equiprobable stratum, uniformly
/// placed inside it; strata are permuted independently per dimension.
pub fn lhs(space: &ParamSpace, count: usize) -> Result<Vec<Vec<f64>>> {
    if space.dims.is_empty() {
        return Err(Error::Empty("parameter space has no continuous dimension".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("LHS needs at least one sample".into()));
    }
    let mut rng = stream(space.seed, purpose::LHS, 0);
    let mut table = vec![vec![0.0; space.dims.len()]; count];
    for (d, dim) in space.dims.iter().enumerate() {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(&mut rng);
        for (row, &s) in table.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            row[d] = dim.lo + (dim.hi - dim.lo) * (s as f64 + u) / count as f64;
        }
    }
    Ok(table)
}

/// Inverse-CDF draw of a damage class.
pub fn sample_damage(pdf: &[f64], rng: &mut impl Rng) -> Result<usize> {
    validate_pdf(pdf)?;
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (g, &p) in pdf.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return Ok(g);
        }
    }
    // rounding left u above the last partial sum
    Ok(pdf.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// Parameter points and time samples used to collect snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPlan {
    pub points: Vec<ParamPoint>,
    /// Zero-based history columns kept as snapshots.
    pub time_indices: Vec<usize>,
}

impl SnapshotPlan {
    pub fn snapshot_count(&self) -> usize {
        self.points.len() * self.time_indices.len()
    }
}

/// Plans `points × per_point` snapshots over the first `window_steps` of
/// `steps` recorded samples.
///
/// Classes cycle through 0..=G so that every damage state is visited as
/// soon as `points ≥ G + 1`.
pub fn snapshot_schedule(
    space: &ParamSpace,
    points: usize,
    per_point: usize,
    steps: usize,
    window_steps: usize,
) -> Result<SnapshotPlan> {
    let classes = space.subdomain_count() + 1;
    if points < classes {
        return Err(Error::InvalidArgument(format!(
            "{points} parameter samples cannot cover {classes} damage states"
        )));
    }
    if per_point == 0 || per_point > steps {
        return Err(Error::InvalidArgument(format!(
            "snapshots per sample must lie in 1..={steps}, got {per_point}"
        )));
    }
    let window = window_steps.min(steps);
    if per_point > window {
        return Err(Error::InvalidArgument(format!(
            "{per_point} snapshots do not fit a window of {window} samples"
        )));
    }
    let time_indices = (0..per_point)
        .map(|k| ((k + 1) * window).div_ceil(per_point) - 1)
        .collect();
    let cycle: Vec<usize> = (0..points).map(|i| i % classes).collect();
    Ok(SnapshotPlan {
        points: space.points_with_classes(&cycle)?,
        time_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(seed: u64) -> ParamSpace {
        ParamSpace::portal((10e3, 50e3), (50.0, 95.0), (0.02, 0.25), vec![0.2; 5], seed).unwrap()
    }

    #[test]
    fn four_strata() {
        let s = ParamSpace {
            dims: vec![UniformDim::new("u", 0.0, 1.0)],
            damage_pdf: vec![1.0],
            seed: 3,
        };
        let t = lhs(&s, 4).unwrap();
        let mut strata: Vec<usize> = t.iter().map(|r| (r[0] * 4.0) as usize).collect();
        strata.sort_unstable();
        assert_eq!(strata, vec![0, 1, 2, 3]);
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(lhs(&space(9), 50).unwrap(), lhs(&space(9), 50).unwrap());
        assert_ne!(lhs(&space(9), 50).unwrap(), lhs(&space(10), 50).unwrap());
    }

    #[test]
    fn degenerate_pdf_and_bounds() {
        let mut rng = stream(1, 0, 0);
        for _ in 0..100 {
            assert_eq!(sample_damage(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
        assert!(sample_damage(&[0.5, 0.6], &mut rng).is_err());
        assert!(ParamSpace::portal((2.0, 1.0), (50.0, 95.0), (0.0, 0.1), vec![1.0], 0).is_err());
    }

    #[test]
    fn undamaged_points_have_zero_level() {
        for p in space(4).sample_points(200).unwrap() {
            if p.class == 0 {
                assert_eq!(p.damage_level, 0.0);
            } else {
                assert!((0.02..=0.25).contains(&p.damage_level));
            }
        }
    }

    #[test]
    fn schedule_shapes() {
        let plan = snapshot_schedule(&space(1), 200, 100, 200, 100).unwrap();
        assert_eq!(plan.snapshot_count(), 20_000);
        assert_eq!(plan.time_indices, (0..100).collect::<Vec<_>>());
        let plan = snapshot_schedule(&space(1), 5, 5, 200, 5).unwrap();
        let mut classes: Vec<usize> = plan.points.iter().map(|p| p.class).collect();
        classes.sort_unstable();
        assert_eq!(classes, vec![0, 1, 2, 3, 4]);
        let plan = snapshot_schedule(&space(1), 5, 20, 200, 100).unwrap();
        assert_eq!(plan.time_indices[0], 4);
        assert_eq!(*plan.time_indices.last().unwrap(), 99);
        assert!(snapshot_schedule(&space(1), 4, 10, 200, 100).is_err());
        assert!(snapshot_schedule(&space(1), 5, 201, 200, 200).is_err());
    }
}
