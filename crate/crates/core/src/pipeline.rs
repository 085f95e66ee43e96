//! Pipeline stages and their on-disk artifacts.
//!
//! Every stage reads what the previous one wrote into a workspace
//! directory and stamps the run-config hash on its own output.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::container::{Container, Tensor};
use crate::dataset::{
    generate, Channel, DatasetD, Fidelity, Generated, GenerationConfig, Instance, SensorLayout, Simulator,
    Standardization,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ConfusionMatrix, SweepCell, SweepStudy, SweepTable};
use crate::fcn::{train, Architecture, FcnModel, TrainConfig, TrainingCurves};
use crate::fem::{FomArrays, ParamPoint};
use crate::mesh::{generate_portal_mesh, Mesh2D};
use crate::reduction::{incremental_pod, project, PodBasis, RomArrays};
use crate::sampling::snapshot_schedule;

/// Artifact locations under a workspace root.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn mesh(&self) -> PathBuf {
        self.root.join("mesh.json")
    }

    pub fn basis(&self) -> PathBuf {
        self.root.join("rom.sbc")
    }

    pub fn dataset(&self, split: Split, fidelity: Fidelity) -> PathBuf {
        self.root
            .join("dataset")
            .join(format!("{}_{}.sbc", split.name(), fidelity.name()))
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.sbc")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

pub fn build_mesh(config: &RunConfig) -> Result<Mesh2D> {
    generate_portal_mesh(&config.geometry(), config.geometry.mesh_size_m)
}

pub fn save_mesh(mesh: &Mesh2D, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let json = serde_json::to_string(mesh).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_mesh(path: &Path) -> Result<Mesh2D> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let mesh: Mesh2D = serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))?;
    mesh.validate()?;
    Ok(mesh)
}

/// Full-order arrays and the sensor rows of a meshed structure.
pub struct Structure {
    pub mesh: Mesh2D,
    pub fom: FomArrays,
    pub layout: SensorLayout,
    pub channels: Vec<Channel>,
}

impl Structure {
    pub fn new(config: &RunConfig, mesh: Mesh2D) -> Result<Self> {
        let fom = FomArrays::build(&mesh, &config.material())?;
        let layout = SensorLayout::from_positions(&mesh, &config.sensor_specs())?;
        let channels = layout.channels(&fom)?;
        Ok(Self {
            mesh,
            fom,
            layout,
            channels,
        })
    }
}

/// Snapshot collection over the configured plan followed by the
/// block-by-block POD. FOM solves run in parallel batches; blocks enter the
/// decomposition in plan order.
pub fn build_basis(config: &RunConfig, fom: &FomArrays, eps_tol: f64) -> Result<PodBasis> {
    let grid = config.grid()?;
    let params = config.params()?;
    let space = config.space(config.seeds.snapshots)?;
    let plan = snapshot_schedule(
        &space,
        config.snapshots.samples,
        config.snapshots.per_sample,
        config.time.steps,
        config.window_steps(),
    )?;
    let batch = rayon::current_num_threads().max(1) * 2;
    let blocks = plan.points.chunks(batch).enumerate().flat_map(|(c, chunk)| {
        chunk
            .par_iter()
            .enumerate()
            .map(|(j, point)| {
                let h = fom.solve(point, &grid, &params).map_err(|e| Error::Sample {
                    provenance: format!("snapshot sample {} ({point:?})", c * batch + j),
                    source: Box::new(e),
                })?;
                Ok(h.displacements.select_columns(&plan.time_indices))
            })
            .collect::<Vec<_>>()
    });
    incremental_pod(blocks, eps_tol)
}

pub fn basis_to_container(basis: &PodBasis, config_hash: &str) -> Container {
    let mut c = Container::new();
    c.set_meta("kind", "pod_basis");
    c.set_meta("config_hash", config_hash);
    c.set_meta("tolerance", format!("{:e}", basis.tolerance));
    c.set_meta("error", format!("{:e}", basis.error));
    c.insert("vectors", Tensor::from_matrix(&basis.vectors));
    c.insert("singular_values", Tensor::vector(basis.singular_values.clone()));
    c
}

pub fn basis_from_container(c: &Container) -> Result<PodBasis> {
    expect_kind(c, "pod_basis")?;
    Ok(PodBasis {
        vectors: c.tensor("vectors")?.to_matrix()?,
        singular_values: c.tensor("singular_values")?.data.clone(),
        error: parse_meta(c, "error")?,
        tolerance: parse_meta(c, "tolerance")?,
    })
}

/// Generates `count` instances with the FOM or, when given, the ROM.
pub fn generate_instances(
    config: &RunConfig,
    structure: &Structure,
    rom: Option<(&RomArrays, &PodBasis)>,
    count: usize,
    snr: Option<f64>,
    seed: u64,
) -> Result<Generated> {
    let simulator = match rom {
        Some((rom, basis)) => Simulator::Rom { rom, basis },
        None => Simulator::Fom(&structure.fom),
    };
    let gen = GenerationConfig {
        count,
        snr,
        seed,
        grid: config.grid()?,
        params: config.params()?,
    };
    generate(&simulator, &config.space(seed)?, &structure.channels, &gen)
}

pub fn dataset_to_container(d: &DatasetD) -> Container {
    let mut c = Container::new();
    let (len, channels) = d.record_shape();
    c.set_meta("kind", "dataset");
    c.set_meta("config_hash", d.config_hash.clone());
    c.set_meta("classes", d.classes.to_string());
    c.set_meta("train", d.train.to_string());
    c.set_meta("validation", d.validation.to_string());
    c.set_meta("test", d.test.to_string());
    c.set_meta("snr_convention", "linear power ratio mean(u^2)/sigma^2");
    let mut records = Vec::with_capacity(d.instances.len() * len * channels);
    let mut index = Vec::with_capacity(d.instances.len() * 8);
    for (i, inst) in d.instances.iter().enumerate() {
        records.extend(Tensor::from_matrix(&inst.record).data);
        let p = &inst.point;
        index.extend([
            (i * len * channels) as f64,
            inst.label as f64,
            p.class as f64,
            p.amplitude,
            p.frequency,
            p.damage_level,
            match inst.fidelity {
                Fidelity::Fom => 0.0,
                Fidelity::Rom => 1.0,
            },
            inst.snr.unwrap_or(f64::INFINITY),
        ]);
    }
    c.insert(
        "records",
        Tensor::new(vec![d.instances.len(), len, channels], records).unwrap(),
    );
    c.insert("index", Tensor::new(vec![d.instances.len(), 8], index).unwrap());
    c.insert("stats.mean", Tensor::vector(d.stats.mean.clone()));
    c.insert("stats.std", Tensor::vector(d.stats.std.clone()));
    c.set_meta(
        "index_columns",
        "offset,label,class,amplitude_pa,frequency_hz,damage_level,fidelity(0=fom;1=rom),snr(inf=none)",
    );
    c
}

pub fn dataset_from_container(c: &Container) -> Result<DatasetD> {
    expect_kind(c, "dataset")?;
    let records = c.tensor("records")?;
    let index = c.tensor("index")?;
    let [count, len, channels] = records.shape[..] else {
        return Err(Error::Format("records tensor must be rank 3".into()));
    };
    if index.shape != [count, 8] {
        return Err(Error::Format("index tensor does not match the records".into()));
    }
    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let row = &index.data[i * 8..(i + 1) * 8];
        let offset = row[0] as usize;
        let slice = records
            .data
            .get(offset..offset + len * channels)
            .ok_or_else(|| Error::Format(format!("instance {i} offset out of range")))?;
        instances.push(Instance {
            record: DMatrix::from_row_slice(len, channels, slice),
            label: row[1] as usize,
            point: ParamPoint {
                class: row[2] as usize,
                amplitude: row[3],
                frequency: row[4],
                damage_level: row[5],
            },
            fidelity: if row[6] == 0.0 { Fidelity::Fom } else { Fidelity::Rom },
            snr: row[7].is_finite().then_some(row[7]),
        });
    }
    let d = DatasetD {
        instances,
        train: parse_meta(c, "train")?,
        validation: parse_meta(c, "validation")?,
        test: parse_meta(c, "test")?,
        classes: parse_meta(c, "classes")?,
        stats: Standardization {
            mean: c.tensor("stats.mean")?.data.clone(),
            std: c.tensor("stats.std")?.data.clone(),
        },
        config_hash: c.meta("config_hash")?.to_string(),
    };
    d.validate()?;
    Ok(d)
}

pub fn model_to_container(
    model: &FcnModel,
    train_config: &TrainConfig,
    curves: &TrainingCurves,
    config_hash: &str,
) -> Container {
    let mut c = Container::new();
    c.set_meta("kind", "fcn_model");
    c.set_meta("config_hash", config_hash);
    c.set_meta("architecture", serde_json::to_string(&model.architecture).unwrap());
    c.set_meta("train_config", serde_json::to_string(train_config).unwrap());
    c.set_meta("best_epoch", (curves.best_epoch + 1).to_string());
    for (k, b) in model.blocks.iter().enumerate() {
        let shape = vec![b.conv.out_channels, b.conv.in_channels, b.conv.kernel];
        c.insert(
            &format!("block{k}.kernel"),
            Tensor::new(shape, b.conv.weight.clone()).unwrap(),
        );
        c.insert(&format!("block{k}.bias"), Tensor::vector(b.conv.bias.clone()));
        c.insert(&format!("block{k}.bn_scale"), Tensor::vector(b.norm.gamma.clone()));
        c.insert(&format!("block{k}.bn_shift"), Tensor::vector(b.norm.beta.clone()));
        c.insert(
            &format!("block{k}.bn_running_mean"),
            Tensor::vector(b.norm.running_mean.clone()),
        );
        c.insert(
            &format!("block{k}.bn_running_var"),
            Tensor::vector(b.norm.running_var.clone()),
        );
    }
    let feats = model.head_bias.len();
    c.insert(
        "head.weight",
        Tensor::new(
            vec![feats, model.head_weight.len() / feats.max(1)],
            model.head_weight.clone(),
        )
        .unwrap(),
    );
    c.insert("head.bias", Tensor::vector(model.head_bias.clone()));
    c.insert("input.mean", Tensor::vector(model.input_stats.mean.clone()));
    c.insert("input.std", Tensor::vector(model.input_stats.std.clone()));
    c
}

pub fn model_from_container(c: &Container) -> Result<FcnModel> {
    expect_kind(c, "fcn_model")?;
    let architecture: Architecture =
        serde_json::from_str(c.meta("architecture")?).map_err(|e| Error::Format(e.to_string()))?;
    let mut model = FcnModel::new(architecture, 0)?;
    let fill = |dst: &mut Vec<f64>, name: &str| -> Result<()> {
        let t = c.tensor(name)?;
        if t.data.len() != dst.len() {
            return Err(Error::Format(format!(
                "tensor '{name}' has {} values, expected {}",
                t.data.len(),
                dst.len()
            )));
        }
        dst.copy_from_slice(&t.data);
        Ok(())
    };
    for (k, b) in model.blocks.iter_mut().enumerate() {
        fill(&mut b.conv.weight, &format!("block{k}.kernel"))?;
        fill(&mut b.conv.bias, &format!("block{k}.bias"))?;
        fill(&mut b.norm.gamma, &format!("block{k}.bn_scale"))?;
        fill(&mut b.norm.beta, &format!("block{k}.bn_shift"))?;
        fill(&mut b.norm.running_mean, &format!("block{k}.bn_running_mean"))?;
        fill(&mut b.norm.running_var, &format!("block{k}.bn_running_var"))?;
    }
    fill(&mut model.head_weight, "head.weight")?;
    fill(&mut model.head_bias, "head.bias")?;
    fill(&mut model.input_stats.mean, "input.mean")?;
    fill(&mut model.input_stats.std, "input.std")?;
    Ok(model)
}

fn expect_kind(c: &Container, kind: &str) -> Result<()> {
    let found = c.meta("kind")?;
    if found != kind {
        return Err(Error::Format(format!("expected a {kind} container, found {found}")));
    }
    Ok(())
}

fn parse_meta<T: std::str::FromStr>(c: &Container, key: &str) -> Result<T> {
    c.meta(key)?
        .parse()
        .map_err(|_| Error::Format(format!("metadata '{key}' is not a valid number")))
}

/// Results of one end-to-end run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub basis_size: usize,
    pub model: FcnModel,
    pub curves: TrainingCurves,
    pub confusion: ConfusionMatrix,
    pub train_failures: Vec<String>,
    pub test_failures: Vec<String>,
}

/// ROM build, ROM training set, FOM test set, training and testing in
/// memory. A precomputed basis skips the ROM build.
pub fn run(config: &RunConfig, structure: &Structure, basis: Option<&PodBasis>) -> Result<Outcome> {
    let built;
    let basis = match basis {
        Some(b) => b,
        None => {
            built = build_basis(config, &structure.fom, config.snapshots.eps_tol)?;
            &built
        }
    };
    let rom = project(&structure.fom, basis)?;
    let hash = config.hash();
    let d = &config.dataset;
    let train_gen = generate_instances(
        config,
        structure,
        Some((&rom, basis)),
        d.count,
        d.snr,
        config.seeds.dataset,
    )?;
    let dataset = DatasetD::for_training(train_gen.instances, d.train_fraction, config.classes(), &hash)?;
    let (model, curves) = train(&dataset, &config.train_config())?;
    let test_gen = generate_instances(config, structure, None, d.test_count, d.snr, config.seeds.test)?;
    let confusion = evaluate(&model, &test_gen.instances)?;
    Ok(Outcome {
        basis_size: basis.size(),
        model,
        curves,
        confusion,
        train_failures: train_gen.failures,
        test_failures: test_gen.failures,
    })
}

/// The configuration of one sweep cell.
pub fn cell_config(config: &RunConfig, study: SweepStudy, value: f64) -> RunConfig {
    let mut c = config.clone();
    match study {
        SweepStudy::Delta => c.parameters.damage_level = [value, value],
        SweepStudy::Snr => c.dataset.snr = Some(value),
        SweepStudy::EpsTol => c.snapshots.eps_tol = value,
    }
    c.sweep = None;
    c
}

/// Runs the whole pipeline once per grid value. All cells share the seeds
/// of `config`; a failing cell is recorded and the sweep moves on. The SNR
/// study builds its basis once since noise only enters after the solves.
pub fn sweep(config: &RunConfig, structure: &Structure, study: SweepStudy, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::config(format!("sweep.{}", study.name()), "no grid values"));
    }
    let shared = match study {
        SweepStudy::Snr => Some(build_basis(config, &structure.fom, config.snapshots.eps_tol)?),
        _ => None,
    };
    let mut cells = Vec::with_capacity(values.len());
    for &v in values {
        let cfg = cell_config(config, study, v);
        let cell = cfg
            .validate()
            .and_then(|_| run(&cfg, structure, shared.as_ref()))
            .map_or_else(
                |e| SweepCell::failed(v, &e),
                |o| SweepCell {
                    value: v,
                    accuracy: Some(o.confusion.accuracy()),
                    basis_size: Some(o.basis_size),
                    damaged_as_undamaged: Some(o.confusion.damaged_as_undamaged()),
                    error: None,
                },
            );
        cells.push(cell);
    }
    Ok(SweepTable { study, cells })
}
