//! Datasets and membership bookkeeping.

mod cifar;
mod dataset;
mod split;
mod synthetic;

pub use cifar::{load_cifar10, CIFAR_BATCH_FILES, CIFAR_RECORD_BYTES};
pub use dataset::LabeledDataset;
pub use split::{class_members, split_half, SplitPlan};
pub use synthetic::{make_synthetic, SYNTHETIC_NOISE};
