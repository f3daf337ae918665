use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::reset::{apply_resets, NeuronId, ResetEvent, ResetTrigger};
use super::tracker::ActivityTracker;
use crate::error::{Error, Result};
use crate::nn::{DenseNet, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedoConfig {
    /// Normalized score at or below which a neuron is reset.
    pub tau: f64,
    /// Cadence in tasks.
    pub every_tasks: usize,
}

impl Default for RedoConfig {
    fn default() -> Self {
        RedoConfig {
            tau: 0.1,
            every_tasks: 1,
        }
    }
}

impl RedoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.every_tasks == 0 || !self.tau.is_finite() {
            return Err(Error::Config(format!("invalid ReDO config {self:?}")));
        }
        Ok(())
    }

    /// True at the end of every `every_tasks`-th task (0-based `task_index`).
    pub fn due(&self, task_index: usize) -> bool {
        (task_index + 1).is_multiple_of(self.every_tasks)
    }
}

/// Per hidden layer, each neuron's mean activation over the batch divided by
/// the layer's mean of those values. A silent layer scores all zeros.
pub fn redo_scores(net: &DenseNet, eval_batch: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
    let trace = net.forward(eval_batch)?;
    let mut out = Vec::with_capacity(trace.num_hidden());
    for k in 0..trace.num_hidden() {
        let h = trace.hidden(k);
        let means: Vec<f64> = h
            .columns()
            .into_iter()
            .map(|c| c.mean().unwrap_or(0.0))
            .collect();
        let layer_mean = means.iter().sum::<f64>() / means.len() as f64;
        let scores = if layer_mean > 0.0 {
            means.iter().map(|m| m / layer_mean).collect()
        } else {
            vec![0.0; means.len()]
        };
        out.push(scores);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn redo_step<R: Rng + ?Sized>(
    net: &mut DenseNet,
    opt: &mut OptimizerState,
    tracker: &mut ActivityTracker,
    eval_batch: ArrayView2<f64>,
    cfg: &RedoConfig,
    step: u64,
    rng: &mut R,
) -> Result<Vec<ResetEvent>> {
    let scores = redo_scores(net, eval_batch)?;
    let targets: Vec<NeuronId> = scores
        .iter()
        .enumerate()
        .flat_map(|(layer, s)| {
            s.iter()
                .enumerate()
                .filter(|(_, v)| **v <= cfg.tau)
                .map(move |(index, _)| NeuronId { layer, index })
        })
        .collect();
    apply_resets(net, opt, tracker, &targets, ResetTrigger::Redo, step, rng)
}
