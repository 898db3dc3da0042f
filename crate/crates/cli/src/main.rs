use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use morphrom::mesh::write_mesh;
use morphrom::pipeline::dataset::{self, parent_mesh};
use morphrom::pipeline::evaluate::{error_vs_samples, write_spectrum, write_triples};
use morphrom::pipeline::verify::INVARIANCE_FLOOR;
use morphrom::pipeline::{self, Dataset, Mode, RunConfig};
use morphrom::surrogate::SurrogateModel;

#[derive(Parser, Debug)]
#[command(name = "morphrom", version, about = "Geometry-parameterized surrogate constitutive models")]
struct Cli {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "MORPHROM_WORKERS")]
    workers: Option<usize>,
    /// Output root; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Builds and writes the parent cell mesh.
    Mesh,
    /// Solves the training and test cell problems.
    Generate {
        /// Skip the test set.
        #[arg(long)]
        train_only: bool,
        /// Fraction of training samples to re-solve as a consistency check.
        #[arg(long, default_value_t = 0.0)]
        validate: f64,
    },
    /// Builds the surrogate from a training set.
    Train {
        /// Training set directory; `<out>/train` by default.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Measures effective-stress and field errors on the test set.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Also retrain on leading subsets of the training set of these sizes.
        #[arg(long, value_delimiter = ',')]
        sample_sizes: Vec<usize>,
        /// Skip the stress-field errors.
        #[arg(long)]
        effective_only: bool,
    },
    /// Solves the two-scale Cook's membrane.
    Twoscale {
        #[arg(long, value_enum, default_value_t = TwoScaleMode::Both)]
        mode: TwoScaleMode,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Checks invariance and equilibrium of a trained model.
    Verify {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        maps: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TwoScaleMode {
    Fe2,
    Surrogate,
    Both,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    if let Some(o) = &cli.out {
        config.output.clone_from(o);
    }
    config.validate()?;
    Ok(config)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_model(config: &RunConfig, path: &Option<PathBuf>) -> Result<SurrogateModel> {
    let dir = path.clone().unwrap_or_else(|| config.output.join("model"));
    SurrogateModel::load(&dir).with_context(|| format!("loading model from {}", dir.display()))
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let out = config.output.clone();
    std::fs::create_dir_all(&out)?;
    write_json(&out.join("config.json"), &config)?;
    match &cli.command {
        Command::Mesh => {
            let mesh = parent_mesh(&config)?;
            let path = out.join("parent.mesh");
            write_mesh(&mesh, &path)?;
            println!(
                "{} nodes, {} elements, area {:.12} -> {}",
                mesh.n_nodes(),
                mesh.n_elements(),
                mesh.area()?,
                path.display()
            );
        }
        Command::Generate { train_only, validate } => {
            let (train, t) = pipeline::generate_snapshots(&config, &out.join("train"))?;
            println!("training set: {} accepted of {}, {:.1} s", train.len(), config.n_samples, t.snapshots_s);
            if *validate > 0.0 {
                let report = dataset::validate(&train, &config, *validate)?;
                write_json(&out.join("train").join("validation.json"), &report)?;
                println!("validation: {report:?}");
            }
            if !train_only {
                let (test, t) = pipeline::generate_test_set(&config, &out.join("test"))?;
                println!("test set: {} accepted of {}, {:.1} s", test.len(), config.n_test, t.snapshots_s);
            }
        }
        Command::Train { dataset } => {
            let dir = dataset.clone().unwrap_or_else(|| out.join("train"));
            let train = Dataset::load(&dir).with_context(|| format!("loading {}", dir.display()))?;
            let (model, hash, t) = pipeline::train_to_dir(&train, &config, &out.join("model"))?;
            if let Some(pack) = &model.recovery {
                write_spectrum(&out.join("model").join("spectrum.csv"), &pack.basis.eigenvalues)?;
            }
            write_json(&out.join("model").join("timings.json"), &t)?;
            println!("model {hash} with {} modes, {:.1} s", model.n_modes(), t.pod_s + t.gpr_s + t.auxiliary_s);
        }
        Command::Evaluate {
            model,
            test,
            sample_sizes,
            effective_only,
        } => {
            let model = load_model(&config, model)?;
            let dir = test.clone().unwrap_or_else(|| out.join("test"));
            let test = Dataset::load(&dir).with_context(|| format!("loading {}", dir.display()))?;
            let report = pipeline::evaluate(&model, &test, !effective_only, config.workers)?;
            let eval_dir = out.join("evaluation");
            report.write(&eval_dir)?;
            println!(
                "{} test samples, N = {}: mean E_Pbar = {:.4e}, mean E_P = {:.4e}",
                report.n_test, report.n_modes, report.mean_e_pbar, report.mean_e_p
            );
            if !sample_sizes.is_empty() {
                let train = Dataset::load(&out.join("train"))?;
                let rows = error_vs_samples(&train, &test, &config, sample_sizes)?;
                write_triples(&eval_dir.join("error_vs_samples.csv"), "n_samples,mean_e_pbar,mean_e_p", &rows)?;
            }
            if model.out_of_range_count() > 0 {
                info!("{} queries outside the training ranges", model.out_of_range_count());
            }
        }
        Command::Twoscale { mode, model } => {
            let dir = out.join("twoscale");
            let mut runs = Vec::new();
            if *mode != TwoScaleMode::Fe2 {
                let m = Arc::new(load_model(&config, model)?);
                runs.push(pipeline::run_twoscale(&config, Mode::Surrogate, Some(m))?);
            }
            if *mode != TwoScaleMode::Surrogate {
                runs.push(pipeline::run_twoscale(&config, Mode::Fe2, None)?);
            }
            for r in &runs {
                r.write(&dir)?;
                println!(
                    "{:?}: compliance {:.6}, max |u| {:.6}, online {:.2} s",
                    r.report.mode, r.report.compliance, r.report.max_displacement, r.report.timings.online_s
                );
            }
            if let [s, f] = &runs[..] {
                let cmp = morphrom::macrofem::compare_fields(&f.problem, &s.solution, &f.solution)?;
                let summary = serde_json::json!({
                    "compliance_relative_error": (s.report.compliance - f.report.compliance).abs() / f.report.compliance,
                    "displacement_relative_l2": cmp.relative_l2,
                    "speedup": f.report.timings.online_s / s.report.timings.online_s,
                });
                write_json(&dir.join("comparison.json"), &summary)?;
                println!("{summary}");
            }
        }
        Command::Verify { model, maps } => {
            let model = load_model(&config, model)?;
            let report = pipeline::verify_model(&model, *maps, config.seed)?;
            write_json(&out.join("verify.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.max_invariance > 1e-5 || report.max_interior_ratio > 1e-6 || report.max_periodic_ratio > 1e-8 {
                bail!("verification failed (invariance floor {INVARIANCE_FLOOR})");
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
