//! Experiment plumbing: configs, datasets, evaluation, metrics, plot data, and the work
//! behind each CLI subcommand.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod idx;
pub mod metrics;
pub mod robust;
pub mod run;

pub use config::{ExperimentConfig, ExperimentData, TheoryConfig};
pub use dataset::{generate_dataset, DatasetKind, DatasetSpec};
pub use eval::{clean_accuracy, evaluate_robustness, AccuracyTable, RobustAccuracy};
pub use idx::load_idx;
pub use metrics::{emit_plots, read_metrics, MetricsRecord, MetricsWriter};
pub use robust::{build_robust_dataset, RobustDataset};
