//! Shared fixtures for the criterion benches.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snr_core::interventions::FiringMode;
use snr_core::{ActivityTracker, DenseNet, InitRule};

/// The permuted-MNIST network shape.
pub const LAYERS: [usize; 4] = [784, 100, 100, 10];
pub const BATCH: usize = 16;

pub fn net() -> DenseNet {
    DenseNet::new(&LAYERS, 0, InitRule::default()).expect("valid layer sizes")
}

/// A batch of standard-uniform inputs and uniform labels.
pub fn batch(rows: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, LAYERS[0]), |_| rng.random::<f64>());
    let y = (0..rows).map(|_| rng.random_range(0..LAYERS[3])).collect();
    (x, y)
}

/// A tracker that has seen `steps` batches, a few neurons silent throughout.
pub fn warm_tracker(steps: usize, window: usize) -> ActivityTracker {
    let widths = &LAYERS[1..LAYERS.len() - 1];
    let mut t =
        ActivityTracker::new(widths, window, 0, FiringMode::BatchAny).expect("valid tracker");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..steps {
        let fired: Vec<Vec<bool>> = widths
            .iter()
            .map(|&w| {
                (0..w)
                    .map(|i| i % 17 != 0 && rng.random_bool(0.3))
                    .collect()
            })
            .collect();
        t.observe(&fired).expect("shapes match");
    }
    t
}
