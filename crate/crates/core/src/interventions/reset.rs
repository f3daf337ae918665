use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tracker::ActivityTracker;
use crate::error::{Error, Result};
use crate::nn::{DenseNet, OptimizerState};

/// A hidden neuron: `layer` indexes hidden layers (0 = first hidden layer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetTrigger {
    Snr,
    Cbp,
    Redo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetEvent {
    pub step: u64,
    pub layer: usize,
    pub neuron: usize,
    pub trigger: ResetTrigger,
}

/// Resets every neuron in `targets` (duplicates are collapsed) and returns one
/// event per reset.
pub fn apply_resets<R: Rng + ?Sized>(
    net: &mut DenseNet,
    opt: &mut OptimizerState,
    tracker: &mut ActivityTracker,
    targets: &[NeuronId],
    trigger: ResetTrigger,
    step: u64,
    rng: &mut R,
) -> Result<Vec<ResetEvent>> {
    let widths = net.hidden_widths();
    let unique: BTreeSet<NeuronId> = targets.iter().copied().collect();
    if let Some(bad) = unique
        .iter()
        .find(|n| n.layer >= widths.len() || n.index >= widths[n.layer])
    {
        return Err(Error::Input(format!(
            "reset target {bad:?} is not a hidden neuron of a net with hidden widths {widths:?}"
        )));
    }
    let mut events = Vec::with_capacity(unique.len());
    for n in unique {
        net.reinit_neuron(n.layer, n.index, rng);
        opt.clear_neuron(n.layer, n.index);
        tracker.reset_neuron(n.layer, n.index);
        events.push(ResetEvent {
            step,
            layer: n.layer,
            neuron: n.index,
            trigger,
        });
    }
    Ok(events)
}
