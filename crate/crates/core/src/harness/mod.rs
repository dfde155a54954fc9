//! Experiment orchestration: datasets, configuration, the training loop,
//! sweeps and CSV reporting.

pub mod config;
pub mod data;
pub mod report;
pub mod sweep;
pub mod train;

pub use config::{DatasetSpec, ExperimentConfig, LayerConfig, NetSpec};
pub use data::{generate_synthetic, generate_toy_1d, load_csv, write_csv, Dataset, SyntheticSpec};
pub use sweep::{sweep, sweep_on, MechanismKind, PointMetrics, TradeoffPoint};
pub use train::{evaluate, load_split, train_on, train_run, IterationRow, LeakSummary, RunRecord};
