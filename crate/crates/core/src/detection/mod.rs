//! Neuron-death detection as a sequential hypothesis test.
//!
//! Under `H0` a neuron fires as a Bernoulli(p) process, so its inter-firing
//! time is Geometric(p) on `{1, 2, …}`; under `H1` it never fires. A threshold
//! test with parameter `k` waits until the first firing or `k` silent steps,
//! rejecting (declaring the neuron dead) in the latter case.

mod pair;
mod simulate;
mod threshold;

pub use pair::{
    error_ratio, error_ratio_weighted, fixed_threshold_profile, fixed_threshold_profile_weighted,
    log_ratio_slope, ratio_grid, slope_reference, snr_pair_profile, write_grid_csv, FixedProfile,
    PairRow, SnrPairProfile,
};
pub use simulate::{simulate_cost, simulate_test, Hypothesis, SimulatedArm, SimulatedCost};
pub use threshold::{
    brute_force_optimal, optimal_threshold, threshold_cost, CostBreakdown, DetectorParams,
};

/// Relative slack used when comparing floating-point quantities against
/// integer-search boundaries.
pub(crate) const SLACK: f64 = 1e-12;
