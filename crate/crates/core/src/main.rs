use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rslcad::harness::{
    compare_runs, evaluate, load_manifest, read_metrics, run_experiment, write_synthetic_dataset, DataSource,
    DatasetManifest, ManifestEntry, RunConfig, Split,
};
use rslcad::network::checkpoint;
use rslcad::preprocess::pgm::{read_pgm, write_pgm};
use rslcad::preprocess::{preprocess_pipeline, GrayImage, Laterality};
use rslcad::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Mammogram CNN training with reinforcement sample learning.
#[derive(Parser, Debug)]
#[command(name = "rslcad", version)]
struct Cli {
    /// Log progress at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic PGM dataset and its manifest.
    Generate {
        /// Run configuration; its synthetic_* keys shape the data.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Data seed (overrides synthetic_seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the preprocessing chain and write the network-input crops as PGM.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Crop size, HxW or a single size.
        #[arg(long, default_value = "64x64")]
        size: String,
    },
    /// Train a model; writes metrics.csv, model.ckpt and config.txt.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model and partition seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error rate of a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Restrict to one split: train or val.
        #[arg(long)]
        split: Option<String>,
    },
    /// Compare two metrics CSVs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Train-error level for the epochs-to-threshold row.
        #[arg(long, default_value_t = 0.20)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { EXIT_NUMERIC } else { EXIT_DATA })
        }
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { config, seed, out } => {
            let config = load_config(config.as_deref())?;
            let DataSource::Synthetic {
                mut spec,
                train_per_class,
                val_per_class,
            } = config.data
            else {
                return Err(Failure::Usage("generate needs a synthetic data source, not a manifest".into()));
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let manifest = write_synthetic_dataset(&out, &spec, train_per_class, val_per_class)?;
            println!("wrote {} images and {}", manifest.len(), out.join("manifest.csv").display());
        }
        Command::Preprocess { manifest, out, size } => {
            let target = parse_size(&size).ok_or_else(|| Failure::Usage(format!("invalid --size {size:?}")))?;
            let manifest = load_manifest(&manifest)?;
            let crops = preprocess_manifest(&manifest, &out, target)?;
            crops.save(out.join("manifest.csv"))?;
            println!("wrote {} crops to {}", crops.len(), out.display());
        }
        Command::Train { config, seed, out } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let outcome = run_experiment(&config, &out)?;
            let log = &outcome.log;
            println!(
                "{} epochs ({:?}); final train error {:.4}, val error {}; {} update passes",
                log.epochs_run(),
                log.stop_reason,
                log.final_train_error().unwrap_or(f64::NAN),
                log.final_validation_error().map_or("n/a".into(), |v| format!("{v:.4}")),
                log.total_update_passes()
            );
            println!("metrics: {}", outcome.metrics_path.display());
            println!("checkpoint: {}", outcome.checkpoint_path.display());
        }
        Command::Eval {
            checkpoint: ckpt,
            manifest,
            split,
        } => {
            let model = checkpoint::load(&ckpt)?;
            let mut manifest = load_manifest(&manifest)?;
            if let Some(split) = split {
                let split: Split = split.parse().map_err(Failure::Usage)?;
                manifest = manifest.split(split);
            }
            let error = evaluate(&model, &manifest)?;
            println!("error rate {error} on {} images", manifest.len());
        }
        Command::Compare { a, b, threshold } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Failure::Usage(format!("--threshold {threshold} is outside [0, 1]")));
            }
            let comparison = compare_runs(&read_metrics(&a)?, &read_metrics(&b)?, threshold);
            println!("A: {}\nB: {}", a.display(), b.display());
            println!("{comparison}");
        }
    }
    Ok(())
}

/// Crops are written mirrored to the left, so their laterality becomes `L`
/// (or stays `U`).
fn preprocess_manifest(manifest: &DatasetManifest, out: &Path, target: (usize, usize)) -> Result<DatasetManifest, Error> {
    let mut entries = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let source = manifest.resolve(entry);
        let image = read_pgm(&source)?.with_laterality(entry.laterality);
        let tensor = preprocess_pipeline(&image, target).map_err(|e| e.context(format!("{}", source.display())))?;
        let pixels = tensor.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        let laterality = match entry.laterality {
            Laterality::Unknown => Laterality::Unknown,
            _ => Laterality::Left,
        };
        let crop = GrayImage::new(target.1, target.0, pixels, laterality)?;
        // Keep relative layouts so distinct sources cannot collide.
        let relative = if entry.path.is_relative() {
            Path::new("crops").join(&entry.path)
        } else {
            Path::new("crops").join(entry.path.file_name().unwrap_or(entry.path.as_os_str()))
        };
        let dest = out.join(&relative);
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_pgm(&crop, &dest)?;
        entries.push(ManifestEntry {
            path: relative,
            laterality,
            ..entry.clone()
        });
    }
    Ok(DatasetManifest {
        entries,
        base_dir: out.to_path_buf(),
    })
}

fn parse_size(s: &str) -> Option<(usize, usize)> {
    let positive = |t: &str| t.trim().parse().ok().filter(|&n: &usize| n > 0);
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Some((positive(h)?, positive(w)?)),
        None => positive(s).map(|n| (n, n)),
    }
}
