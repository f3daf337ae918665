//! Datasets and continual-learning task streams.

mod dataset;
mod idx;
mod stream;
mod synthetic;

pub use dataset::Dataset;
pub use idx::{
    load_idx, mnist_paths, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels,
    DATA_DIR_ENV,
};
pub use stream::{batches, permuted_task, random_label_task, TaskKind, TaskStream};
pub use synthetic::{synthetic_dataset, SyntheticSpec};
