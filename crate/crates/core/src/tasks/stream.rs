use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PermutedInput,
    RandomLabel,
}

/// Applies one random permutation of the input coordinates to every image.
pub fn permuted_task(base: &Dataset, task_seed: u64) -> Dataset {
    let mut perm: Vec<usize> = (0..base.dim()).collect();
    perm.shuffle(&mut rng::stream(task_seed, "permutation", 0));
    let src = base.images();
    let mut images = src.clone();
    for (mut dst, row) in images.rows_mut().into_iter().zip(src.rows()) {
        for (j, &p) in perm.iter().enumerate() {
            dst[j] = row[p];
        }
    }
    base.with_images(images)
}

/// Redraws every label uniformly from the class set.
pub fn random_label_task(base: &Dataset, task_seed: u64) -> Dataset {
    let mut rng = rng::stream(task_seed, "labels", 0);
    let labels = (0..base.len())
        .map(|_| rng.random_range(0..base.classes()))
        .collect();
    base.with_labels(labels)
}

/// Shuffled minibatch indices for one epoch over `n` examples; the last batch
/// may be short.
pub fn batches(
    n: usize,
    batch_size: usize,
    epoch: u64,
    shuffle_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(shuffle_seed, "epoch", epoch));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// A replayable sequence of tasks derived from one base dataset.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub kind: TaskKind,
    pub base: Arc<Dataset>,
    pub num_tasks: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl TaskStream {
    pub fn task_seed(&self, t: usize) -> u64 {
        rng::derive_seed(self.seed, "task", t as u64)
    }

    /// Task `t`; a pure function of the base data, the seed and `t`.
    pub fn task(&self, t: usize) -> Result<Dataset> {
        if t >= self.num_tasks {
            return Err(Error::Input(format!(
                "task {t} out of range 0..{}",
                self.num_tasks
            )));
        }
        let s = self.task_seed(t);
        Ok(match self.kind {
            TaskKind::PermutedInput => permuted_task(&self.base, s),
            TaskKind::RandomLabel => random_label_task(&self.base, s),
        })
    }

    /// Batch order for `epoch` of task `t`.
    pub fn epoch_batches(&self, t: usize, epoch: usize) -> Result<Vec<Vec<usize>>> {
        batches(
            self.base.len(),
            self.batch_size,
            epoch as u64,
            rng::derive_seed(self.task_seed(t), "shuffle", 0),
        )
    }
}
