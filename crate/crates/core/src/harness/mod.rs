//! Operational surface: datasets, experiment configs, seeded runs, and CSV
//! output.

pub mod config;
pub mod data;
pub mod run;
pub mod study;

pub use config::{DataSource, Estimator, ExperimentConfig, OptimizerChoice, PdePreset, Task};
pub use data::{center, load_idx, load_mnist_dir, synth_dataset, Dataset, SynthSpec};
pub use run::{
    architecture, dump_graph, effective_batch, evaluate_chunked, load_dataset, memory_report, read_config,
    run_experiment, run_repeats, RunSummary, VERSION_STAMP,
};
pub use study::{variance_vs_depth, VarianceRow};
