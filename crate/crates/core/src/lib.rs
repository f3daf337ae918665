//! Plasticity workbench for continual learning.
//!
//! The crate bundles four loosely coupled pieces:
//!
//! - [`nn`]: a small dense ReLU network with exact backprop, SGD/Adam and an
//!   optional parameter-free layer norm.
//! - [`interventions`]: Self-Normalized Resets (SNR) and the competing
//!   plasticity interventions (CBP, ReDO, L2, L2-Init, Shrink-and-Perturb).
//! - [`relu_theory`] and [`detection`]: exact simulators for population
//!   gradient descent on a single ReLU and for the neuron-death hypothesis test.
//! - [`tasks`] and [`harness`]: continual-learning task streams, the
//!   experiment runner, sweeps and reporting.

// `!(x > 0.0)` is the NaN-rejecting guard used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod harness;
pub mod interventions;
pub mod nn;
pub mod relu_theory;
pub mod rng;
pub mod selftest;
pub mod tasks;

pub use error::{Error, Result};
pub use interventions::{ActivityTracker, NeuronId, ResetEvent, ResetTrigger, SnrConfig};
pub use nn::{DenseNet, ForwardTrace, Gradients, InitRule, OptimizerKind, OptimizerState};
