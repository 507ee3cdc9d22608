use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use swtf_core::dataio::{synth_generate, AugmentConfig};
use swtf_core::pipeline::{
    bench, evaluate_with, fuse_dump, gradcheck, parse_resolutions, train_from, Checkpoint,
    RunConfig,
};
use swtf_core::SynthSpec;

#[derive(Parser)]
#[command(
    name = "swtf",
    version,
    about = "Sparse weighted temporal fusion toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic four-direction dataset.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Dataset root overriding the one stored in the checkpoint.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write the fusion map and fused frames of one snippet as PPM files.
    Fuse {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        snippet: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference checks of every backward pass.
    Gradcheck {
        #[arg(long, default_value = "all")]
        scope: String,
    },
    /// Sparse versus dense flow cost per resolution.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "64x64,128x128")]
        resolutions: String,
        /// Also write the machine-readable table here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn init_logging(timestamps: bool) {
    let mut builder =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if !timestamps {
        builder.format_timestamp(None);
    }
    let _ = builder.try_init();
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

/// Run configuration matching a freshly generated synthetic dataset.
/// Horizontal flips would swap the left/right labels, so they are off.
fn synth_run_config(spec: &SynthSpec, out: &Path, seed: u64) -> RunConfig {
    let mut config = RunConfig {
        dataset_root: out.to_path_buf(),
        output_dir: out.join("run"),
        synth: spec.clone(),
        t: spec.t,
        resize: Some([spec.height, spec.width]),
        seed,
        augment: Some(AugmentConfig {
            flip: false,
            ..AugmentConfig::default()
        }),
        ..RunConfig::default()
    };
    config.net.num_classes = spec.num_classes;
    config
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { spec, out, seed } => {
            init_logging(true);
            let spec: SynthSpec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", p.display()))?
                }
                None => SynthSpec::default(),
            };
            let manifest = synth_generate(&spec, seed, &out)?;
            let config_path = out.join("train_config.json");
            std::fs::write(
                &config_path,
                synth_run_config(&spec, &out, seed).to_json() + "\n",
            )?;
            println!(
                "wrote {} train / {} test snippets to {}; run config at {}",
                manifest.train.len(),
                manifest.test.len(),
                out.display(),
                config_path.display()
            );
        }
        Command::Train { config, resume } => {
            let config = load_config(Some(&config))?;
            init_logging(!config.deterministic);
            let resume = resume
                .map(|p| Checkpoint::load(&p).with_context(|| format!("loading {}", p.display())))
                .transpose()?;
            let summary = train_from(&config, resume.as_ref())?;
            println!(
                "trained {} epochs; last checkpoint {}",
                summary.history.epochs(),
                summary.last_checkpoint.display()
            );
            if let (Some((epoch, acc)), Some(best)) =
                (summary.best_test(), &summary.best_checkpoint)
            {
                println!(
                    "best test accuracy {acc:.4} at epoch {epoch}; checkpoint {}",
                    best.display()
                );
            }
        }
        Command::Eval {
            checkpoint,
            split,
            dataset,
            json,
        } => {
            init_logging(true);
            let ck = Checkpoint::load(&checkpoint)
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let mut config = ck.config()?;
            if let Some(root) = dataset {
                config.dataset_root = root;
            }
            let report = evaluate_with(&ck, &config, &split)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Fuse {
            config,
            snippet,
            out,
        } => {
            init_logging(true);
            let config = load_config(config.as_deref())?;
            let dump = fuse_dump(&config, &snippet, &out)?;
            println!(
                "sampled frames {:?}; wrote {} and {} fused frames",
                dump.indices.as_slice(),
                dump.map.display(),
                dump.frames.len()
            );
        }
        Command::Gradcheck { scope } => {
            init_logging(true);
            let report = gradcheck(&scope)?;
            print!("{}", report.to_text());
            if !report.passed() {
                eprintln!("failed: {}", report.failures().join(", "));
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench {
            config,
            resolutions,
            json,
        } => {
            init_logging(true);
            let config = load_config(config.as_deref())?;
            let resolutions = parse_resolutions(&resolutions)?;
            if resolutions.is_empty() {
                bail!("no resolutions given");
            }
            let report = bench(&config, &resolutions)?;
            print!("{}", report.to_text());
            if let Some(path) = json {
                std::fs::write(&path, report.to_json() + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
