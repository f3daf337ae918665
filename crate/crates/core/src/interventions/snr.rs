use serde::{Deserialize, Serialize};

use super::reset::NeuronId;
use super::tracker::ActivityTracker;
use crate::error::{Error, Result};

/// Self-Normalized Resets: a neuron is reset once its current silent streak
/// lies in the `eta` tail of its own (geometric) inter-firing distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrConfig {
    /// Rejection percentile threshold.
    pub eta: f64,
    /// Trailing window, in steps, for the firing-rate estimate.
    pub window: usize,
    /// Post-reset grace period in steps; defaults to `window`.
    #[serde(default)]
    pub grace: Option<u64>,
}

impl Default for SnrConfig {
    fn default() -> Self {
        SnrConfig {
            eta: 0.01,
            window: 1000,
            grace: None,
        }
    }
}

impl SnrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!(
                "eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        if self.window == 0 {
            return Err(Error::Config("SNR window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grace_steps(&self) -> u64 {
        self.grace.unwrap_or(self.window as u64)
    }
}

/// `P(A >= a)` for `A ~ Geometric(p)`, written `(1 - p)^a`.
pub fn survival(rate: f64, silent: u64) -> f64 {
    (1.0 - rate).powf(silent as f64)
}

/// Shortest silent streak at which a neuron with firing rate `rate` is reset:
/// the smallest `a` with `(1 - rate)^a <= eta`, i.e. `ceil(ln eta / ln(1 - rate))`.
pub fn reset_threshold(rate: f64, eta: f64) -> u64 {
    if rate >= 1.0 {
        return 1;
    }
    let a = (eta.ln() / (1.0 - rate).ln()).ceil();
    (a as u64).max(1)
}

/// Neurons that SNR resets at the tracker's current state.
pub fn snr_select(tracker: &ActivityTracker, cfg: &SnrConfig) -> Vec<NeuronId> {
    let mut out = Vec::new();
    for layer in 0..tracker.num_layers() {
        for i in 0..tracker.width(layer) {
            if tracker.grace(layer, i) > 0 {
                continue;
            }
            let a = tracker.since_fire(layer, i);
            if a > 0 && a >= reset_threshold(tracker.rate(layer, i), cfg.eta) {
                out.push(NeuronId { layer, index: i });
            }
        }
    }
    out
}
