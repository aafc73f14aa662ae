//! Configuration-driven experiments: sweeps, CSV and SVG artifacts, self-test.

pub mod config;
pub mod report;
pub mod selftest;
pub mod sweep;
pub mod training;

pub use config::{parse_config, Axis, ExperimentConfig, Method, ModelRole, NetSize, TrainSpec, TrainTask};
pub use report::{parse_csv, read_csv, render_svg_plot, svg_plot, to_csv, write_csv};
pub use sweep::{load_models, run_sweep, run_sweep_with, BerRecord, LoadedModels};
pub use training::{evaluate, fit, make_training_set, EvalSummary};
