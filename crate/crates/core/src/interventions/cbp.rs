use rand::Rng;
use serde::{Deserialize, Serialize};

use super::reset::{apply_resets, NeuronId, ResetEvent, ResetTrigger};
use super::tracker::ActivityTracker;
use crate::error::{Error, Result};
use crate::nn::{DenseNet, ForwardTrace, OptimizerState};

/// Continual Backprop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbpConfig {
    /// Resets per mature neuron per example, accumulated per layer.
    pub replacement_rate: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    /// Steps a neuron must survive before it can be replaced.
    #[serde(default = "default_maturity")]
    pub maturity: u64,
}

fn default_decay() -> f64 {
    0.99
}

fn default_maturity() -> u64 {
    100
}

impl Default for CbpConfig {
    fn default() -> Self {
        CbpConfig {
            replacement_rate: 1e-4,
            decay: default_decay(),
            maturity: default_maturity(),
        }
    }
}

impl CbpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.replacement_rate >= 0.0) || !(0.0..=1.0).contains(&self.decay) {
            return Err(Error::Config(format!("invalid CBP config {self:?}")));
        }
        Ok(())
    }
}

/// Running utilities, ages and fractional replacement budgets per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbpState {
    pub utility: Vec<Vec<f64>>,
    pub age: Vec<Vec<u64>>,
    pub budget: Vec<f64>,
}

impl CbpState {
    pub fn new(hidden_widths: &[usize]) -> Self {
        CbpState {
            utility: hidden_widths.iter().map(|&w| vec![0.0; w]).collect(),
            age: hidden_widths.iter().map(|&w| vec![0; w]).collect(),
            budget: vec![0.0; hidden_widths.len()],
        }
    }
}

/// Updates utilities from the trace and replaces the least useful mature
/// neuron of a layer whenever its budget reaches one.
#[allow(clippy::too_many_arguments)]
pub fn cbp_step<R: Rng + ?Sized>(
    net: &mut DenseNet,
    opt: &mut OptimizerState,
    tracker: &mut ActivityTracker,
    trace: &ForwardTrace,
    state: &mut CbpState,
    cfg: &CbpConfig,
    step: u64,
    rng: &mut R,
) -> Result<Vec<ResetEvent>> {
    if trace.num_hidden() != state.utility.len() {
        return Err(Error::Shape("CBP state does not match the trace".into()));
    }
    let batch = trace.batch_size() as f64;
    let mut events = Vec::new();
    for k in 0..trace.num_hidden() {
        let h = trace.hidden(k);
        let outgoing = &net.layers()[k + 1].weight;
        for i in 0..h.ncols() {
            let act = h.column(i).iter().map(|v| v.abs()).sum::<f64>() / batch;
            let out: f64 = outgoing.column(i).iter().map(|w| w.abs()).sum();
            let u = &mut state.utility[k][i];
            *u = cfg.decay * *u + (1.0 - cfg.decay) * act * out;
            state.age[k][i] += 1;
        }
        let mature = state.age[k].iter().filter(|&&a| a > cfg.maturity).count();
        state.budget[k] += cfg.replacement_rate * mature as f64 * batch;
        while state.budget[k] >= 1.0 {
            let candidate = state.age[k]
                .iter()
                .zip(&state.utility[k])
                .enumerate()
                .filter(|(_, (a, _))| **a > cfg.maturity)
                .min_by(|(_, (_, u1)), (_, (_, u2))| u1.total_cmp(u2))
                .map(|(i, _)| i);
            let Some(i) = candidate else { break };
            events.extend(apply_resets(
                net,
                opt,
                tracker,
                &[NeuronId { layer: k, index: i }],
                ResetTrigger::Cbp,
                step,
                rng,
            )?);
            state.utility[k][i] = 0.0;
            state.age[k][i] = 0;
            state.budget[k] -= 1.0;
        }
    }
    Ok(events)
}
