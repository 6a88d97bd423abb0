//! End-to-end runs: data → preprocess → build → train → metrics + checkpoint.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::harness::config::{DataSource, Mode, RunConfig};
use crate::harness::manifest::{load_manifest, DatasetManifest, Split};
use crate::harness::metrics::{MetricsRow, MetricsWriter};
use crate::harness::synthetic::{generate_splits, SyntheticImage};
use crate::network::{checkpoint, Model, NetworkSpec, TABLE1_LAYERS};
use crate::preprocess::preprocess_pipeline;
use crate::rsl::{conventional_train, partition_batches, rsl_train, RslRunLog};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub model: Model,
    pub log: RslRunLog,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Training and (possibly absent) validation sets, preprocessed to network input.
pub fn load_data(config: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    match &config.data {
        DataSource::Manifest(path) => {
            let manifest = load_manifest(path)?;
            let train = manifest.split(Split::Train);
            if train.is_empty() {
                return Err(Error::Domain(format!("manifest {} has no train entries", path.display())));
            }
            let val = manifest.split(Split::Validation);
            let val = if val.is_empty() { None } else { Some(val.load_dataset(config.input_size)?) };
            Ok((train.load_dataset(config.input_size)?, val))
        }
        DataSource::Synthetic {
            spec,
            train_per_class,
            val_per_class,
        } => {
            let (train, val) = generate_splits(spec, *train_per_class, *val_per_class)?;
            Ok((
                preprocess_synthetic(&train, config.input_size)?,
                Some(preprocess_synthetic(&val, config.input_size)?),
            ))
        }
    }
}

fn preprocess_synthetic(samples: &[SyntheticImage], input: (usize, usize)) -> Result<Dataset> {
    let images = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| preprocess_pipeline(&s.image, input).map_err(|e| e.context(format!("synthetic image {i}"))))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(images, samples.iter().map(|s| s.label).collect())
}

/// The standard layer stack at the configured input size and padding.
pub fn build_network(config: &RunConfig) -> Result<NetworkSpec> {
    NetworkSpec::new(TABLE1_LAYERS.to_vec(), config.input_size, config.padding)
}

/// Runs one configured experiment, writing `metrics.csv`, `model.ckpt` and
/// the effective `config.txt` into `out_dir`. Errors name the failing stage.
pub fn run_experiment(config: &RunConfig, out_dir: impl AsRef<Path>) -> Result<ExperimentOutcome> {
    let out_dir = out_dir.as_ref();
    config.validate().map_err(|e| e.context("config stage"))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e).context("output stage"))?;
    let config_path = out_dir.join(CONFIG_FILE);
    std::fs::write(&config_path, config.to_text()).map_err(|e| Error::io(&config_path, e).context("output stage"))?;

    let (train, val) = load_data(config).map_err(|e| e.context("data stage"))?;
    log::info!(
        "loaded {} training and {} validation images",
        train.len(),
        val.as_ref().map_or(0, Dataset::len)
    );
    let spec = build_network(config).map_err(|e| e.context("build stage"))?;
    let mut model = Model::new(spec, config.seed).map_err(|e| e.context("build stage"))?;
    let partition = partition_batches(train.len(), config.batch_size, config.seed).map_err(|e| e.context("build stage"))?;

    let metrics_path = out_dir.join(METRICS_FILE);
    let mut writer = MetricsWriter::create(&metrics_path).map_err(|e| e.context("output stage"))?;
    let start = Instant::now();
    let record_clock = config.record_wall_clock;
    let mut observer = |record: &crate::rsl::EpochRecord| {
        let clock = if record_clock { start.elapsed().as_secs_f64() } else { 0.0 };
        log::info!(
            "epoch {}: train error {:.4}, val error {:?}, update passes {}",
            record.epoch,
            record.train_error,
            record.validation_error,
            record.cumulative_update_passes
        );
        writer.write_row(&MetricsRow::from_record(record, clock))
    };

    let lr = config.learning_rate;
    let log = match config.mode {
        Mode::Rsl => rsl_train(
            &mut model,
            &train,
            val.as_ref(),
            &partition,
            &config.epoch_map,
            lr,
            &config.termination,
            &mut observer,
        ),
        Mode::Conventional => conventional_train(
            &mut model,
            &train,
            val.as_ref(),
            &partition,
            lr,
            &config.termination,
            &mut observer,
        ),
    }
    .map_err(|e| e.context("train stage"))?;

    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    checkpoint::save(&model, &checkpoint_path).map_err(|e| e.context("output stage"))?;
    Ok(ExperimentOutcome {
        model,
        log,
        metrics_path,
        checkpoint_path,
    })
}

/// Fraction of manifest images `model` misclassifies.
pub fn evaluate(model: &Model, manifest: &DatasetManifest) -> Result<f64> {
    if manifest.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty manifest".into()));
    }
    manifest.load_dataset(model.spec().input_size())?.error_rate(model)
}
