//! Labelled sensor recordings synthesized from the full or reduced model.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FomArrays, ParamPoint};
use crate::integrator::{sensor_accelerations, GenAlphaParams, StateHistory, TimeGrid};
use crate::mesh::Mesh2D;
use crate::reduction::{lift, PodBasis, RomArrays};
use crate::sampling::{purpose, stream, ParamSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Displacement,
    Acceleration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sensor {
    pub node: usize,
    pub direction: Direction,
    pub quantity: Quantity,
}

impl Sensor {
    /// Full-mesh dof index.
    pub fn dof(&self) -> usize {
        2 * self.node + if self.direction == Direction::X { 0 } else { 1 }
    }
}

/// Where the virtual sensors sit and what they record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub sensors: Vec<Sensor>,
}

/// A sensor position request in mesh coordinates (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub x: f64,
    pub y: f64,
    pub direction: Direction,
    pub quantity: Quantity,
}

impl SensorLayout {
    /// Snaps each requested position to its nearest mesh node.
    pub fn from_positions(mesh: &Mesh2D, specs: &[SensorSpec]) -> Result<Self> {
        let sensors = specs
            .iter()
            .map(|s| Sensor {
                node: mesh.nearest_node(s.x, s.y),
                direction: s.direction,
                quantity: s.quantity,
            })
            .collect();
        let layout = Self { sensors };
        layout.validate(mesh.dof_count())?;
        Ok(layout)
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn validate(&self, dof_count: usize) -> Result<()> {
        if self.sensors.is_empty() {
            return Err(Error::Empty("sensor layout has no sensors".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.sensors {
            if s.dof() >= dof_count {
                return Err(Error::InvalidArgument(format!("sensor dof {} out of range", s.dof())));
            }
            if !seen.insert((s.dof(), s.quantity)) {
                return Err(Error::InvalidArgument(format!("sensor dof {} listed twice", s.dof())));
            }
        }
        Ok(())
    }

    /// History rows of every sensor for a constrained model.
    pub fn channels(&self, fom: &FomArrays) -> Result<Vec<Channel>> {
        self.sensors
            .iter()
            .map(|s| {
                let row = fom.free_index(s.dof()).ok_or_else(|| {
                    Error::InvalidArgument(format!("sensor on node {} sits on a clamped dof", s.node))
                })?;
                Ok(Channel {
                    row,
                    quantity: s.quantity,
                })
            })
            .collect()
    }
}

/// One recorded row of a state history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channel {
    pub row: usize,
    pub quantity: Quantity,
}

/// `U`: L×N₀ recordings, one column per channel.
pub fn extract_sensors(history: &StateHistory, channels: &[Channel]) -> Result<DMatrix<f64>> {
    let l = history.len();
    if let Some(c) = channels.iter().find(|c| c.row >= history.dim()) {
        return Err(Error::InvalidArgument(format!(
            "channel row {} outside a {}-row history",
            c.row,
            history.dim()
        )));
    }
    let acc = if channels.iter().any(|c| c.quantity == Quantity::Acceleration) {
        Some(sensor_accelerations(history)?)
    } else {
        None
    };
    let mut u = DMatrix::zeros(l, channels.len());
    for (n, c) in channels.iter().enumerate() {
        let src = match c.quantity {
            Quantity::Displacement => &history.displacements,
            Quantity::Acceleration => acc.as_ref().unwrap(),
        };
        for k in 0..l {
            u[(k, n)] = src[(c.row, k)];
        }
    }
    Ok(u)
}

/// Adds white Gaussian noise with per-channel variance `mean(u²) / snr`.
///
/// Returns the noisy record and the indices of all-zero channels, which
/// are left untouched.
pub fn add_noise(u: &DMatrix<f64>, snr: f64, rng: &mut impl Rng) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be positive, got {snr}")));
    }
    let mut out = u.clone();
    let mut silent = Vec::new();
    for n in 0..u.ncols() {
        let power = u.column(n).iter().map(|x| x * x).sum::<f64>() / u.nrows() as f64;
        if power == 0.0 {
            silent.push(n);
            continue;
        }
        let sigma = (power / snr).sqrt();
        for x in out.column_mut(n).iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += sigma * z;
        }
    }
    Ok((out, silent))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Fom,
    Rom,
}

impl Fidelity {
    pub fn name(self) -> &'static str {
        match self {
            Fidelity::Fom => "fom",
            Fidelity::Rom => "rom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// L×N₀
    pub record: DMatrix<f64>,
    pub label: usize,
    pub point: ParamPoint,
    pub fidelity: Fidelity,
    pub snr: Option<f64>,
}

/// Produces sensor records for parameter points.
pub enum Simulator<'a> {
    Fom(&'a FomArrays),
    Rom { rom: &'a RomArrays, basis: &'a PodBasis },
}

impl Simulator<'_> {
    pub fn fidelity(&self) -> Fidelity {
        match self {
            Simulator::Fom(_) => Fidelity::Fom,
            Simulator::Rom { .. } => Fidelity::Rom,
        }
    }

    pub fn record(
        &self,
        point: &ParamPoint,
        channels: &[Channel],
        grid: &TimeGrid,
        params: &GenAlphaParams,
    ) -> Result<DMatrix<f64>> {
        match self {
            Simulator::Fom(fom) => extract_sensors(&fom.solve(point, grid, params)?, channels),
            Simulator::Rom { rom, basis } => {
                let reduced = rom.solve(point, grid, params)?;
                // lift only the sensor rows
                let rows: Vec<usize> = channels.iter().map(|c| c.row).collect();
                let local: Vec<Channel> = channels
                    .iter()
                    .enumerate()
                    .map(|(i, c)| Channel {
                        row: i,
                        quantity: c.quantity,
                    })
                    .collect();
                extract_sensors(&lift(basis, &reduced, Some(&rows)), &local)
            }
        }
    }
}

/// Settings of one generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub count: usize,
    pub snr: Option<f64>,
    pub seed: u64,
    pub grid: TimeGrid,
    pub params: GenAlphaParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub instances: Vec<Instance>,
    /// Failed instances with their provenance.
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

/// Samples `count` points, simulates them in parallel and keeps the
/// results in index order. Failed solves are recorded and skipped.
pub fn generate(
    simulator: &Simulator<'_>,
    space: &ParamSpace,
    channels: &[Channel],
    config: &GenerationConfig,
) -> Result<Generated> {
    if config.count == 0 {
        return Err(Error::InvalidArgument("instance count must be positive".into()));
    }
    let space = ParamSpace {
        seed: config.seed,
        ..space.clone()
    };
    let points = space.sample_points(config.count)?;
    let fidelity = simulator.fidelity();
    let results: Vec<Result<(Instance, Vec<usize>)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let clean = simulator
                .record(point, channels, &config.grid, &config.params)
                .map_err(|e| Error::Sample {
                    provenance: format!("instance {i} ({} {point:?})", fidelity.name()),
                    source: Box::new(e),
                })?;
            let (record, silent) = match config.snr {
                Some(snr) => add_noise(&clean, snr, &mut stream(config.seed, purpose::NOISE, i as u32))?,
                None => (clean, Vec::new()),
            };
            Ok((
                Instance {
                    record,
                    label: point.class,
                    point: *point,
                    fidelity,
                    snr: config.snr,
                },
                silent,
            ))
        })
        .collect();
    let mut out = Generated {
        instances: Vec::with_capacity(config.count),
        failures: Vec::new(),
        warnings: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((inst, silent)) => {
                if !silent.is_empty() {
                    out.warnings
                        .push(format!("instance {i}: silent channels {silent:?}, no noise added"));
                }
                out.instances.push(inst);
            }
            Err(e) => out.failures.push(e.to_string()),
        }
    }
    Ok(out)
}

/// Per-channel affine input normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Mean and (population) standard deviation over all samples of the
    /// given records; flat channels get unit scale.
    pub fn fit(records: &[&DMatrix<f64>]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Empty("no records to fit".into()))?;
        let c = first.ncols();
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut count = 0usize;
        for r in records {
            if r.ncols() != c {
                return Err(Error::DimensionMismatch("records with different channel counts".into()));
            }
            count += r.nrows();
            for n in 0..c {
                for &x in r.column(n).iter() {
                    sum[n] += x;
                    sq[n] += x * x;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / count as f64 - m * m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// Channel-major `[C][L]` copy of a standardized L×C record.
    pub fn apply_channel_major(&self, record: &DMatrix<f64>) -> Vec<f64> {
        let (l, c) = record.shape();
        let mut out = Vec::with_capacity(l * c);
        for n in 0..c {
            let (m, s) = (self.mean[n], self.std[n]);
            out.extend(record.column(n).iter().map(|x| (x - m) / s));
        }
        out
    }
}

/// Train, validation and held-out test instances, stored in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetD {
    pub instances: Vec<Instance>,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// G + 1
    pub classes: usize,
    /// Fitted on the training split.
    pub stats: Standardization,
    pub config_hash: String,
}

impl DatasetD {
    /// Splits generated instances `train_fraction : rest` into training and
    /// validation (instances are i.i.d., so the split is contiguous).
    pub fn for_training(
        instances: Vec<Instance>,
        train_fraction: f64,
        classes: usize,
        config_hash: &str,
    ) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Empty("no instances".into()));
        }
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {train_fraction} outside [0, 1]"
            )));
        }
        let train = ((instances.len() as f64) * train_fraction).round() as usize;
        if train == 0 {
            return Err(Error::InvalidArgument("training split is empty".into()));
        }
        let records: Vec<&DMatrix<f64>> = instances[..train].iter().map(|i| &i.record).collect();
        let stats = Standardization::fit(&records)?;
        let d = Self {
            validation: instances.len() - train,
            train,
            test: 0,
            classes,
            stats,
            config_hash: config_hash.into(),
            instances,
        };
        d.validate()?;
        Ok(d)
    }

    /// A held-out set; its statistics are informative only.
    pub fn for_testing(instances: Vec<Instance>, classes: usize, config_hash: &str) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Empty("no instances".into()));
        }
        let records: Vec<&DMatrix<f64>> = instances.iter().map(|i| &i.record).collect();
        let stats = Standardization::fit(&records)?;
        let d = Self {
            train: 0,
            validation: 0,
            test: instances.len(),
            classes,
            stats,
            config_hash: config_hash.into(),
            instances,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train + self.validation + self.test != self.instances.len() {
            return Err(Error::Format("split sizes do not add up".into()));
        }
        let shape = self.instances[0].record.shape();
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.record.shape() != shape {
                return Err(Error::Format(format!(
                    "instance {i} has shape {:?}",
                    inst.record.shape()
                )));
            }
            if inst.label >= self.classes {
                return Err(Error::Format(format!("instance {i} has label {}", inst.label)));
            }
            if !inst.record.iter().all(|x| x.is_finite()) {
                return Err(Error::Format(format!("instance {i} has non-finite samples")));
            }
        }
        Ok(())
    }

    pub fn train_set(&self) -> &[Instance] {
        &self.instances[..self.train]
    }

    pub fn validation_set(&self) -> &[Instance] {
        &self.instances[self.train..self.train + self.validation]
    }

    pub fn test_set(&self) -> &[Instance] {
        &self.instances[self.train + self.validation..]
    }

    /// (L, N₀)
    pub fn record_shape(&self) -> (usize, usize) {
        self.instances[0].record.shape()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for i in &self.instances {
            counts[i.label] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_selection_is_a_transpose() {
        let v = DMatrix::from_fn(5, 4, |i, l| (i * 10 + l) as f64);
        let h = StateHistory::from_displacements(0.1, v.clone());
        let ch: Vec<Channel> = (0..3)
            .map(|row| Channel {
                row,
                quantity: Quantity::Displacement,
            })
            .collect();
        let u = extract_sensors(&h, &ch).unwrap();
        assert_eq!(u, v.rows(0, 3).transpose());
        let bad = [Channel {
            row: 9,
            quantity: Quantity::Displacement,
        }];
        assert!(extract_sensors(&h, &bad).is_err());
    }

    #[test]
    fn permuted_layout_permutes_columns() {
        let v = DMatrix::from_fn(4, 6, |i, l| ((i + 1) * (l + 2)) as f64);
        let h = StateHistory::from_displacements(0.1, v);
        let a = [0, 2, 3].map(|row| Channel {
            row,
            quantity: Quantity::Acceleration,
        });
        let b = [3, 0, 2].map(|row| Channel {
            row,
            quantity: Quantity::Acceleration,
        });
        let ua = extract_sensors(&h, &a).unwrap();
        let ub = extract_sensors(&h, &b).unwrap();
        assert_eq!(ua.column(2), ub.column(0));
        assert_eq!(ua.column(0), ub.column(1));
    }

    #[test]
    fn silent_channels_are_reported() {
        let u = DMatrix::from_fn(10, 2, |l, n| if n == 0 { 0.0 } else { l as f64 });
        let (noisy, silent) = add_noise(&u, 10.0, &mut stream(0, 0, 0)).unwrap();
        assert_eq!(silent, vec![0]);
        assert_eq!(noisy.column(0), u.column(0));
        assert!(add_noise(&u, 0.0, &mut stream(0, 0, 0)).is_err());
    }

    #[test]
    fn standardization_of_flat_channel() {
        let r = DMatrix::from_fn(4, 2, |l, n| if n == 0 { 3.0 } else { l as f64 });
        let s = Standardization::fit(&[&r]).unwrap();
        assert_eq!(s.mean[0], 3.0);
        assert_eq!(s.std[0], 1.0);
        assert!((s.mean[1] - 1.5).abs() < 1e-15);
        let cm = s.apply_channel_major(&r);
        assert_eq!(&cm[..4], &[0.0; 4]);
    }
}
