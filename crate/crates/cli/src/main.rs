use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sbc::config::RunConfig;
use sbc::container::Container;
use sbc::dataset::{DatasetD, Fidelity};
use sbc::error::{Error, Result};
use sbc::eval::{evaluate, SweepStudy};
use sbc::fcn::train;
use sbc::fem::{natural_frequencies, ParamPoint};
use sbc::pipeline::{self, Split, Structure, Workspace};
use sbc::reduction::project;

#[derive(Parser)]
#[command(name = "sbc", version, about = "Simulation-based damage classification pipeline")]
struct Cli {
    /// Directory holding every artifact; relative paths resolve against it.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Worker threads; 1 is the bit-reproducible reference mode.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Rom,
    Fom,
}

impl From<Model> for Fidelity {
    fn from(m: Model) -> Self {
        match m {
            Model::Rom => Fidelity::Rom,
            Model::Fom => Fidelity::Fom,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    Delta,
    Snr,
    EpsTol,
}

#[derive(Subcommand)]
enum Command {
    /// Triangulate the frame and write mesh.json.
    MeshGen,
    /// Solve the full-order model for one parameter point.
    FomSolve {
        #[arg(long, default_value_t = 0)]
        class: usize,
        #[arg(long, default_value_t = 30e3)]
        amplitude_pa: f64,
        #[arg(long, default_value_t = 80.0)]
        frequency_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        damage_level: f64,
        /// Also print this many natural frequencies.
        #[arg(long, default_value_t = 0)]
        modes: usize,
        /// Sensor records as CSV (default reports/fom_solve.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect snapshots and build the POD basis (rom.sbc).
    RomBuild {
        #[arg(long)]
        eps_tol: Option<f64>,
    },
    /// Generate a labelled dataset container.
    DatasetGen {
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Defaults to rom for training and fom for testing.
        #[arg(long, value_enum)]
        model: Option<Model>,
        #[arg(long)]
        count: Option<usize>,
        /// Linear power ratio or `none`.
        #[arg(long)]
        snr: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the classifier and write model.sbc plus training curves.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a trained model on a test set and write the confusion matrix.
    Test {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "fom")]
        fidelity: Model,
        /// Defaults to dataset/test_<fidelity>.sbc.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Classify one recording (CSV, one row per sample, one column per sensor).
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Rerun the pipeline over a grid of one setting.
    Sweep {
        #[arg(long, value_enum)]
        study: Study,
        /// Comma-separated grid; defaults to the [sweep] table of the config.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Bundle every report table into reports/report.txt.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
    {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match &e {
                Error::Config { .. } => 2,
                e if e.is_numerical() => 3,
                _ => 1,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let ws = Workspace::new(&cli.workspace);
    // prediction needs only the checkpoint
    if let Command::Predict { model, input } = &cli.command {
        return predict(&ws, model.clone(), input);
    }
    let config = RunConfig::load(&ws.resolve(&cli.config))?;
    let hash = config.hash();
    match cli.command {
        Command::MeshGen => {
            let mesh = pipeline::build_mesh(&config)?;
            pipeline::save_mesh(&mesh, &ws.mesh())?;
            println!(
                "mesh: {} nodes, {} elements, {} free dofs -> {}",
                mesh.node_count(),
                mesh.elements.len(),
                mesh.free_dof_count(),
                ws.mesh().display()
            );
        }
        Command::FomSolve {
            class,
            amplitude_pa,
            frequency_hz,
            damage_level,
            modes,
            out,
        } => {
            let structure = load_structure(&ws, &config)?;
            if modes > 0 {
                let k = structure.fom.stiffness_at(0, 0.0)?;
                let freqs = natural_frequencies(&structure.fom.mass, &k, modes)?;
                for (i, f) in freqs.iter().enumerate() {
                    println!("mode {}: {f:.4} Hz", i + 1);
                }
            }
            let point = ParamPoint {
                class,
                amplitude: amplitude_pa,
                frequency: frequency_hz,
                damage_level,
            };
            let history = structure.fom.solve(&point, &config.grid()?, &config.params()?)?;
            let record = sbc::dataset::extract_sensors(&history, &structure.channels)?;
            let path = out.map_or_else(|| ws.reports().join("fom_solve.csv"), |p| ws.resolve(&p));
            write_text(&path, &record_csv(&record, config.time.dt_s))?;
            println!(
                "{} samples x {} sensors -> {}",
                record.nrows(),
                record.ncols(),
                path.display()
            );
        }
        Command::RomBuild { eps_tol } => {
            let structure = load_structure(&ws, &config)?;
            let tol = eps_tol.unwrap_or(config.snapshots.eps_tol);
            let basis = pipeline::build_basis(&config, &structure.fom, tol)?;
            pipeline::basis_to_container(&basis, &hash).save(&ws.basis())?;
            println!(
                "basis: W = {} of {} dofs, error {:.3e} (tolerance {tol:e}) -> {}",
                basis.size(),
                basis.dof_count(),
                basis.error,
                ws.basis().display()
            );
        }
        Command::DatasetGen {
            split,
            model,
            count,
            snr,
            seed,
            out,
        } => {
            let structure = load_structure(&ws, &config)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let fidelity: Fidelity = model.map(Into::into).unwrap_or(if split == Split::Train {
                Fidelity::Rom
            } else {
                Fidelity::Fom
            });
            let count = count.unwrap_or(match split {
                Split::Train => config.dataset.count,
                Split::Test => config.dataset.test_count,
            });
            let snr =
                match snr.as_deref() {
                    None => config.dataset.snr,
                    Some("none") => None,
                    Some(v) => Some(v.parse::<f64>().ok().filter(|x| *x > 0.0).ok_or_else(|| {
                        Error::config("--snr", format!("expected a positive number or none, got {v}"))
                    })?),
                };
            let seed = seed.unwrap_or(match split {
                Split::Train => config.seeds.dataset,
                Split::Test => config.seeds.test,
            });
            let basis;
            let rom;
            let reduced = match fidelity {
                Fidelity::Rom => {
                    basis = pipeline::basis_from_container(&load_checked(&ws.basis(), &hash)?)?;
                    rom = project(&structure.fom, &basis)?;
                    Some((&rom, &basis))
                }
                Fidelity::Fom => None,
            };
            let generated = pipeline::generate_instances(&config, &structure, reduced, count, snr, seed)?;
            for w in &generated.warnings {
                eprintln!("warning: {w}");
            }
            for f in &generated.failures {
                eprintln!("failed: {f}");
            }
            let dataset = match split {
                Split::Train => DatasetD::for_training(
                    generated.instances,
                    config.dataset.train_fraction,
                    config.classes(),
                    &hash,
                )?,
                Split::Test => DatasetD::for_testing(generated.instances, config.classes(), &hash)?,
            };
            let path = out.map_or_else(|| ws.dataset(split, fidelity), |p| ws.resolve(&p));
            pipeline::dataset_to_container(&dataset).save(&path)?;
            println!(
                "{} instances ({} train, {} validation, {} test; {} failed), class counts {:?} -> {}",
                dataset.instances.len(),
                dataset.train,
                dataset.validation,
                dataset.test,
                generated.failures.len(),
                dataset.class_counts(),
                path.display()
            );
        }
        Command::Train {
            dataset,
            epochs,
            seed,
            out,
        } => {
            let path = dataset.map_or_else(|| ws.dataset(Split::Train, Fidelity::Rom), |p| ws.resolve(&p));
            let data = pipeline::dataset_from_container(&load_checked(&path, &hash)?)?;
            let mut tc = config.train_config();
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            if let Some(s) = seed {
                tc.seed = s;
            }
            let (model, curves) = train(&data, &tc)?;
            let model_path = out.map_or_else(|| ws.model(), |p| ws.resolve(&p));
            pipeline::model_to_container(&model, &tc, &curves, &hash).save(&model_path)?;
            write_text(&ws.reports().join("training_curves.csv"), &curves.to_csv())?;
            write_text(&ws.reports().join("training_iterations.csv"), &curves.iterations_csv())?;
            let best = curves.best_epoch;
            println!(
                "trained {} epochs; kept epoch {} (validation accuracy {}) -> {}",
                tc.epochs,
                best + 1,
                curves
                    .epoch_validation_accuracy
                    .get(best)
                    .map_or("n/a".into(), |a| format!("{:.2}%", 100.0 * a)),
                model_path.display()
            );
        }
        Command::Test {
            model,
            fidelity,
            dataset,
        } => {
            let fidelity: Fidelity = fidelity.into();
            let model_path = model.map_or_else(|| ws.model(), |p| ws.resolve(&p));
            let model = pipeline::model_from_container(&load_checked(&model_path, &hash)?)?;
            let data_path = dataset.map_or_else(|| ws.dataset(Split::Test, fidelity), |p| ws.resolve(&p));
            let data = pipeline::dataset_from_container(&load_checked(&data_path, &hash)?)?;
            let cm = evaluate(&model, &data.instances)?;
            let stem = format!("confusion_{}", fidelity.name());
            write_text(&ws.reports().join(format!("{stem}.csv")), &cm.to_csv())?;
            write_text(&ws.reports().join(format!("{stem}.txt")), &cm.to_text())?;
            print!("{}", cm.to_text());
            println!(
                "damaged instances classified as undamaged: {}",
                cm.damaged_as_undamaged()
            );
        }
        Command::Predict { .. } => unreachable!(),
        Command::Sweep { study, values } => {
            let study = match study {
                Study::Delta => SweepStudy::Delta,
                Study::Snr => SweepStudy::Snr,
                Study::EpsTol => SweepStudy::EpsTol,
            };
            let values = if values.is_empty() {
                let grid = config
                    .sweep
                    .as_ref()
                    .ok_or_else(|| Error::config("sweep", "no --values given and the config has no [sweep] table"))?;
                match study {
                    SweepStudy::Delta => grid.delta.clone(),
                    SweepStudy::Snr => grid.snr.clone(),
                    SweepStudy::EpsTol => grid.eps_tol.clone(),
                }
            } else {
                values
            };
            let structure = load_structure(&ws, &config)?;
            let table = pipeline::sweep(&config, &structure, study, &values)?;
            let stem = format!("sweep_{}", study.name());
            write_text(&ws.reports().join(format!("{stem}.csv")), &table.to_csv())?;
            write_text(&ws.reports().join(format!("{stem}.txt")), &table.to_text())?;
            print!("{}", table.to_text());
        }
        Command::Report => {
            let dir = ws.reports();
            let mut names: Vec<PathBuf> = match fs::read_dir(&dir) {
                Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
                Err(_) => return Err(Error::MissingArtifact(dir.display().to_string())),
            };
            names.retain(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n != "report.txt")
                    && matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "csv"))
            });
            names.sort();
            if names.is_empty() {
                return Err(Error::MissingArtifact(format!(
                    "{} (no report tables yet)",
                    dir.display()
                )));
            }
            let mut out = format!("run: {}\nconfig hash: {hash}\n", config.name);
            for p in &names {
                out.push_str(&format!("\n== {} ==\n", p.file_name().unwrap().to_string_lossy()));
                out.push_str(&fs::read_to_string(p)?);
            }
            let path = dir.join("report.txt");
            write_text(&path, &out)?;
            println!("{} tables -> {}", names.len(), path.display());
        }
    }
    Ok(())
}

fn predict(ws: &Workspace, model: Option<PathBuf>, input: &Path) -> Result<()> {
    let model_path = model.map_or_else(|| ws.model(), |p| ws.resolve(&p));
    let model = pipeline::model_from_container(&Container::load(&model_path)?)?;
    let input = ws.resolve(input);
    if !input.exists() {
        return Err(Error::MissingArtifact(input.display().to_string()));
    }
    let record = parse_record(&fs::read_to_string(&input)?)?;
    let p = model.predict(&record)?;
    println!("class {}", p.class);
    let probs: Vec<String> = p.probabilities.iter().map(|q| format!("{q:.4}")).collect();
    println!("probabilities {}", probs.join(" "));
    Ok(())
}

fn load_structure(ws: &Workspace, config: &RunConfig) -> Result<Structure> {
    Structure::new(config, pipeline::load_mesh(&ws.mesh())?)
}

/// Loads a container and warns when it was produced under another config.
fn load_checked(path: &Path, hash: &str) -> Result<Container> {
    let c = Container::load(path)?;
    if c.metadata.get("config_hash").is_some_and(|h| h != hash) {
        eprintln!(
            "warning: {} was produced with a different configuration",
            path.display()
        );
    }
    Ok(c)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn record_csv(record: &nalgebra::DMatrix<f64>, dt: f64) -> String {
    let mut s = String::from("time_s");
    for n in 0..record.ncols() {
        s.push_str(&format!(",sensor{n}"));
    }
    s.push('\n');
    for l in 0..record.nrows() {
        s.push_str(&format!("{:.6}", (l + 1) as f64 * dt));
        for n in 0..record.ncols() {
            s.push_str(&format!(",{:e}", record[(l, n)]));
        }
        s.push('\n');
    }
    s
}

/// Numeric CSV rows; a header line and a leading `time_s` column are skipped.
fn parse_record(text: &str) -> Result<nalgebra::DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut skip_first_col = false;
    if let Some(first) = lines.peek() {
        if first.split(',').any(|f| f.trim().parse::<f64>().is_err()) {
            skip_first_col = first.split(',').next().is_some_and(|f| f.trim() == "time_s");
            lines.next();
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields = line.split(',').skip(usize::from(skip_first_col));
        let row = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format(format!("line {} of the input is not numeric", i + 1)))?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::Format(format!("line {} has {} columns", i + 1, row.len())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("input recording".into()));
    }
    let cols = rows[0].len();
    Ok(nalgebra::DMatrix::from_fn(rows.len(), cols, |l, n| rows[l][n]))
}
