//! Ablation harness: configuration, the training pipeline, evaluation with
//! and without test-time augmentation, resumable grid execution and reports.

pub mod config;
pub mod eval;
pub mod grid;
pub mod report;
pub mod train;

pub use config::{ArchConfig, DataConfig, DataSource, ExperimentConfig, ExperimentGrid, RuntimeConfig, TrainTable};
pub use eval::{accuracy, evaluate, evaluate_tta, posteriors, tta_posteriors_with};
pub use grid::{execute_run, load_records, run_grid, run_grid_on, GridOptions, GridOutcome, ResultRecord, RunStatus};
pub use report::{ablation_verdict, bars, emit_report, AblationThresholds, AblationVerdict, Bar, Spread};
pub use train::{train, train_network, EpochMetrics, History, TrainOptions};
