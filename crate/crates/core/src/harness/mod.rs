//! Manifests, synthetic data, run configuration, metrics and comparisons:
//! the pieces behind the `rslcad` command line.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod manifest;
pub mod metrics;
pub mod synthetic;

pub use compare::{compare_runs, Comparison, RunSummary, NOT_REACHED};
pub use config::{DataSource, Mode, RunConfig};
pub use experiment::{build_network, evaluate, load_data, run_experiment, ExperimentOutcome};
pub use manifest::{load_manifest, DatasetManifest, ManifestEntry, Split};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use synthetic::{generate_synthetic, generate_splits, write_synthetic_dataset, SyntheticImage, SyntheticSpec};
