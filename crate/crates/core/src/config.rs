//! Declarative run configuration. One TOML file drives every stage; keys
//! carry their unit as a suffix.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Direction, Quantity, SensorSpec};
use crate::error::{Error, Result};
use crate::fcn::{AdamConfig, TrainConfig};
use crate::fem::Material;
use crate::integrator::{GenAlphaParams, TimeGrid};
use crate::mesh::{DamageBox, PortalGeometry};
use crate::sampling::ParamSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub time: TimeConfig,
    pub parameters: ParameterConfig,
    pub snapshots: SnapshotConfig,
    pub sensors: Vec<SensorConfig>,
    pub dataset: DatasetConfig,
    pub training: TrainingConfig,
    pub seeds: SeedConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub span_m: f64,
    pub height_m: f64,
    pub column_width_m: f64,
    pub deck_depth_m: f64,
    pub thickness_m: f64,
    /// Height of each damage subdomain.
    pub damage_box_m: f64,
    pub mesh_size_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub young_modulus_pa: f64,
    pub poisson_ratio: f64,
    pub density_kg_m3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt_s: f64,
    /// Recorded samples per instance.
    pub steps: usize,
    pub rho_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterConfig {
    pub amplitude_pa: [f64; 2],
    pub frequency_hz: [f64; 2],
    pub damage_level: [f64; 2],
    /// Probability of each class 0..=G.
    pub damage_pdf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Parameter samples.
    pub samples: usize,
    /// Snapshots kept per sample.
    pub per_sample: usize,
    pub window_s: f64,
    pub eps_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub x_m: f64,
    pub y_m: f64,
    pub direction: Direction,
    pub quantity: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Training plus validation instances.
    pub count: usize,
    pub train_fraction: f64,
    pub test_count: usize,
    /// Linear power ratio; absent for noise-free records.
    #[serde(default)]
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub snapshots: u64,
    pub dataset: u64,
    pub test: u64,
    pub training: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub delta: Vec<f64>,
    pub snr: Vec<f64>,
    pub eps_tol: Vec<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let key = e.span().map_or_else(|| "<file>".to_string(), |s| key_at(text, s.start));
            Error::config(key, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::config("--config", format!("file {} not found", path.display())));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Checks every field and reports all offending keys at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<(String, String)> = Vec::new();
        let mut check = |ok: bool, key: &str, msg: &str| {
            if !ok {
                bad.push((key.to_string(), msg.to_string()));
            }
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let g = &self.geometry;
        for (k, v) in [
            ("geometry.span_m", g.span_m),
            ("geometry.height_m", g.height_m),
            ("geometry.column_width_m", g.column_width_m),
            ("geometry.deck_depth_m", g.deck_depth_m),
            ("geometry.thickness_m", g.thickness_m),
            ("geometry.damage_box_m", g.damage_box_m),
            ("geometry.mesh_size_m", g.mesh_size_m),
        ] {
            check(pos(v), k, "must be positive");
        }
        let m = &self.material;
        check(pos(m.young_modulus_pa), "material.young_modulus_pa", "must be positive");
        check(
            (0.0..0.5).contains(&m.poisson_ratio),
            "material.poisson_ratio",
            "must lie in [0, 0.5)",
        );
        check(pos(m.density_kg_m3), "material.density_kg_m3", "must be positive");
        check(pos(self.time.dt_s), "time.dt_s", "must be positive");
        check(self.time.steps >= 3, "time.steps", "must be at least 3");
        check(
            (0.0..=1.0).contains(&self.time.rho_inf),
            "time.rho_inf",
            "must lie in [0, 1]",
        );
        let p = &self.parameters;
        for (k, r) in [
            ("parameters.amplitude_pa", p.amplitude_pa),
            ("parameters.frequency_hz", p.frequency_hz),
            ("parameters.damage_level", p.damage_level),
        ] {
            check(
                r[0].is_finite() && r[1].is_finite() && r[0] <= r[1],
                k,
                "needs finite [lo, hi] with lo <= hi",
            );
        }
        check(
            p.damage_level[0] >= 0.0 && p.damage_level[1] < 1.0,
            "parameters.damage_level",
            "must lie in [0, 1)",
        );
        let sum: f64 = p.damage_pdf.iter().sum();
        check(
            p.damage_pdf.len() >= 2 && p.damage_pdf.iter().all(|&q| q >= 0.0) && (sum - 1.0).abs() < 1e-9,
            "parameters.damage_pdf",
            "must be a probability vector over at least two classes",
        );
        check(
            p.damage_pdf.len() <= 5,
            "parameters.damage_pdf",
            "the portal frame has four damage subdomains (at most five classes)",
        );
        let s = &self.snapshots;
        check(
            s.samples >= p.damage_pdf.len(),
            "snapshots.samples",
            "must cover every damage class",
        );
        check(s.per_sample >= 1, "snapshots.per_sample", "must be at least 1");
        check(pos(s.window_s), "snapshots.window_s", "must be positive");
        if pos(s.window_s) && pos(self.time.dt_s) {
            check(
                s.per_sample <= self.window_steps(),
                "snapshots.per_sample",
                "cannot exceed the samples inside the snapshot window",
            );
        }
        check(
            s.eps_tol > 0.0 && s.eps_tol < 1.0,
            "snapshots.eps_tol",
            "must lie in (0, 1)",
        );
        check(!self.sensors.is_empty(), "sensors", "at least one sensor is required");
        let d = &self.dataset;
        check(d.count >= 2, "dataset.count", "must be at least 2");
        check(
            d.train_fraction > 0.0 && d.train_fraction <= 1.0,
            "dataset.train_fraction",
            "must lie in (0, 1]",
        );
        check(d.test_count >= 1, "dataset.test_count", "must be at least 1");
        check(d.snr.is_none_or(pos), "dataset.snr", "must be positive when present");
        let t = &self.training;
        check(t.batch_size >= 1, "training.batch_size", "must be at least 1");
        check(t.epochs >= 1, "training.epochs", "must be at least 1");
        check(pos(t.learning_rate), "training.learning_rate", "must be positive");
        check((0.0..1.0).contains(&t.beta1), "training.beta1", "must lie in [0, 1)");
        check((0.0..1.0).contains(&t.beta2), "training.beta2", "must lie in [0, 1)");
        check(pos(t.adam_epsilon), "training.adam_epsilon", "must be positive");
        check(
            !t.filters.is_empty() && t.filters.len() == t.kernels.len(),
            "training.filters",
            "needs one kernel size per block",
        );
        check(
            t.filters.iter().chain(&t.kernels).all(|&n| n >= 1),
            "training.kernels",
            "filter counts and kernel sizes must be positive",
        );
        if let Some(sw) = &self.sweep {
            check(
                sw.delta.iter().all(|&v| (0.0..1.0).contains(&v)),
                "sweep.delta",
                "values must lie in [0, 1)",
            );
            check(sw.snr.iter().all(|&v| pos(v)), "sweep.snr", "values must be positive");
            check(
                sw.eps_tol.iter().all(|&v| v > 0.0 && v < 1.0),
                "sweep.eps_tol",
                "values must lie in (0, 1)",
            );
        }
        if bad.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = bad.iter().map(|(k, _)| k.as_str()).collect();
        let msgs: Vec<String> = bad.iter().map(|(k, m)| format!("{k} {m}")).collect();
        Err(Error::config(keys.join(", "), msgs.join("; ")))
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("run config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Damage boxes at the column bases (Ω₁ left, Ω₂ right) and directly
    /// below the deck (Ω₃ left, Ω₄ right), truncated to the configured
    /// class count.
    pub fn geometry(&self) -> PortalGeometry {
        let g = &self.geometry;
        let top = g.height_m - g.deck_depth_m;
        let left = (0.0, g.column_width_m);
        let right = (g.span_m - g.column_width_m, g.span_m);
        let bottom = (0.0, g.damage_box_m);
        let upper = (top - g.damage_box_m, top);
        let damage_boxes = [(left, bottom), (right, bottom), (left, upper), (right, upper)]
            .into_iter()
            .take(self.classes().saturating_sub(1))
            .map(|((x_min, x_max), (y_min, y_max))| DamageBox {
                x_min,
                x_max,
                y_min,
                y_max,
            })
            .collect();
        PortalGeometry {
            span: g.span_m,
            height: g.height_m,
            column_width: g.column_width_m,
            deck_depth: g.deck_depth_m,
            thickness: g.thickness_m,
            damage_boxes,
        }
    }

    pub fn material(&self) -> Material {
        Material {
            young_modulus: self.material.young_modulus_pa,
            poisson_ratio: self.material.poisson_ratio,
            density: self.material.density_kg_m3,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.dt_s, self.time.steps)
    }

    pub fn params(&self) -> Result<GenAlphaParams> {
        GenAlphaParams::new(self.time.rho_inf)
    }

    pub fn window_steps(&self) -> usize {
        ((self.snapshots.window_s / self.time.dt_s).round() as usize).min(self.time.steps)
    }

    pub fn space(&self, seed: u64) -> Result<ParamSpace> {
        let p = &self.parameters;
        ParamSpace::portal(
            (p.amplitude_pa[0], p.amplitude_pa[1]),
            (p.frequency_hz[0], p.frequency_hz[1]),
            (p.damage_level[0], p.damage_level[1]),
            p.damage_pdf.clone(),
            seed,
        )
    }

    pub fn sensor_specs(&self) -> Vec<SensorSpec> {
        self.sensors
            .iter()
            .map(|s| SensorSpec {
                x: s.x_m,
                y: s.y_m,
                direction: s.direction,
                quantity: s.quantity,
            })
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            batch_size: t.batch_size,
            epochs: t.epochs,
            adam: AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.adam_epsilon,
            },
            seed: self.seeds.training,
            filters: t.filters.clone(),
            kernels: t.kernels.clone(),
        }
    }

    pub fn classes(&self) -> usize {
        self.parameters.damage_pdf.len()
    }

    /// The reference portal-frame case: noise-free, full-size damage boxes.
    pub fn portal_reference() -> Self {
        Self {
            name: "portal_noise_free".into(),
            geometry: GeometryConfig {
                span_m: 5.5,
                height_m: 6.0,
                column_width_m: 0.24,
                deck_depth_m: 0.45,
                thickness_m: 0.1,
                damage_box_m: 0.8,
                mesh_size_m: 0.08,
            },
            material: MaterialConfig {
                young_modulus_pa: 30e9,
                poisson_ratio: 0.2,
                density_kg_m3: 2500.0,
            },
            time: TimeConfig {
                dt_s: 0.005,
                steps: 200,
                rho_inf: 0.5,
            },
            parameters: ParameterConfig {
                amplitude_pa: [10e3, 50e3],
                frequency_hz: [50.0, 95.0],
                damage_level: [0.02, 0.25],
                damage_pdf: vec![0.2; 5],
            },
            snapshots: SnapshotConfig {
                samples: 200,
                per_sample: 100,
                window_s: 0.5,
                eps_tol: 1e-4,
            },
            sensors: portal_sensors(5.5, 6.0),
            dataset: DatasetConfig {
                count: 2000,
                train_fraction: 0.75,
                test_count: 200,
                snr: None,
            },
            training: TrainingConfig {
                batch_size: 16,
                epochs: 100,
                learning_rate: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                adam_epsilon: 1e-8,
                filters: vec![16, 32, 16],
                kernels: vec![8, 5, 3],
            },
            seeds: SeedConfig {
                snapshots: 1,
                dataset: 2,
                test: 3,
                training: 4,
            },
            sweep: None,
        }
    }
}

/// Four horizontal accelerometers on the columns and two vertical ones on
/// the deck.
pub fn portal_sensors(span: f64, height: f64) -> Vec<SensorConfig> {
    let acc = |x_m, y_m, direction| SensorConfig {
        x_m,
        y_m,
        direction,
        quantity: Quantity::Acceleration,
    };
    vec![
        acc(0.0, height / 3.0, Direction::X),
        acc(0.0, 2.0 * height / 3.0, Direction::X),
        acc(span, height / 3.0, Direction::X),
        acc(span, 2.0 * height / 3.0, Direction::X),
        acc(span / 3.0, height, Direction::Y),
        acc(2.0 * span / 3.0, height, Direction::Y),
    ]
}

/// Dotted key path of the TOML entry containing byte offset `pos`.
fn key_at(text: &str, pos: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix("[[").and_then(|t| t.strip_suffix("]]")) {
            table = name.trim().to_string();
            key.clear();
        } else if let Some(name) = trimmed.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            table = name.trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            key = k.trim().to_string();
        }
        offset += line.len();
        if offset > pos {
            break;
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips_through_toml() {
        let c = RunConfig::portal_reference();
        c.validate().unwrap();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn validation_lists_every_offending_key() {
        let mut c = RunConfig::portal_reference();
        c.time.dt_s = -1.0;
        c.training.batch_size = 0;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("time.dt_s"), "{err}");
        assert!(err.contains("training.batch_size"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = RunConfig::portal_reference().to_toml().replace("dt_s", "dt_seconds");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("time"), "{err}");
        assert!(err.contains("dt_seconds"), "{err}");
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::portal_reference();
        let mut b = a.clone();
        b.seeds.dataset += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn geometry_follows_config() {
        let mut c = RunConfig::portal_reference();
        assert_eq!(c.geometry(), PortalGeometry::reference());
        c.geometry.damage_box_m = 0.4;
        assert_eq!(c.geometry(), PortalGeometry::reference_with_box_height(0.4));
    }
}
