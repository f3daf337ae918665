//! Per-step plasticity interventions and the shared neuron-reset mechanics.
//!
//! Only hidden neurons are ever reset. A reset re-draws the neuron's incoming
//! weights from the network's init rule, zeroes its bias and its outgoing
//! weights, clears the matching optimizer moments and restarts the neuron's
//! activity statistics.

mod cbp;
mod redo;
mod regularize;
mod reset;
mod snr;
mod tracker;

pub use cbp::{cbp_step, CbpConfig, CbpState};
pub use redo::{redo_scores, redo_step, RedoConfig};
pub use regularize::{penalty_gradient, penalty_value, snp_apply, Regularizer};
pub use reset::{apply_resets, NeuronId, ResetEvent, ResetTrigger};
pub use snr::{reset_threshold, snr_select, survival, SnrConfig};
pub use tracker::{ActivityTracker, FiringMode};
