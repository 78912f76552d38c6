//! Dataset files, experiment configs and report emission.

pub mod config;
pub mod dataset;
pub mod report;

pub use config::{Analysis, ExperimentConfig, PopulationSpec};
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, LoadedDataset};
pub use report::{run_experiment, run_experiment_with, Experiment, ReportBundle, RunOptions, Table};
