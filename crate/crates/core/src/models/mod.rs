//! Networks, datasets, training and checkpoints.

pub mod arch;
pub mod checkpoint;
pub mod dataset;
pub mod train;

pub use arch::{build_cnn_classifier, build_unet, build_unet_demod, Architecture, ClassifierConfig, UnetConfig};
pub use checkpoint::{load_checkpoint, load_dataset, save_checkpoint, save_dataset};
pub use dataset::{grid, make_dataset, Condition, Dataset, Targets, Task};
pub use train::{train, LossKind, TrainHyper, TrainReport};
