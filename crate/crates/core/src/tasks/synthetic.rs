use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Gaussian class blobs. Class means are independent `N(0, I)` draws scaled
/// to norm `separation`; each example adds `N(0, spread²·I)` noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_separation() -> f64 {
    4.0
}

fn default_spread() -> f64 {
    0.5
}

impl SyntheticSpec {
    pub fn new(n: usize, dim: usize, classes: usize) -> Self {
        SyntheticSpec {
            n,
            dim,
            classes,
            separation: default_separation(),
            spread: default_spread(),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        if self.n == 0 || self.dim == 0 || self.classes < 2 {
            return Err(Error::Config(format!("invalid synthetic spec {self:?}")));
        }
        let mut mrng = rng::stream(seed, "synthetic-means", 0);
        let means: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| {
                let v: Vec<f64> = (0..self.dim).map(|_| mrng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| x * self.separation / norm).collect()
            })
            .collect();
        let mut rng = rng::stream(seed, "synthetic-points", 0);
        // balanced labels in shuffled order
        let mut labels: Vec<usize> = (0..self.n).map(|i| i % self.classes).collect();
        rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
        let mut images = Array2::zeros((self.n, self.dim));
        for (mut row, &c) in images.rows_mut().into_iter().zip(&labels) {
            for (x, m) in row.iter_mut().zip(&means[c]) {
                let z: f64 = rng.sample(StandardNormal);
                *x = m + self.spread * z;
            }
        }
        Dataset::new(images, labels, self.classes)
    }
}

pub fn synthetic_dataset(n: usize, dim: usize, classes: usize, seed: u64) -> Result<Dataset> {
    SyntheticSpec::new(n, dim, classes).generate(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DenseNet, InitRule, OptimizerState};
    use crate::tasks::batches;

    #[test]
    fn deterministic_and_balanced() {
        let a = synthetic_dataset(1000, 8, 4, 3).unwrap();
        assert_eq!(a, synthetic_dataset(1000, 8, 4, 3).unwrap());
        assert_ne!(a, synthetic_dataset(1000, 8, 4, 4).unwrap());
        for c in 0..4 {
            let count = a.labels().iter().filter(|&&l| l == c).count();
            assert!((count as f64 - 250.0).abs() <= 0.05 * 250.0);
        }
    }

    #[test]
    fn two_separated_blobs_are_learned_in_one_epoch() {
        let data = SyntheticSpec {
            separation: 6.0,
            ..SyntheticSpec::new(2000, 10, 2)
        }
        .generate(0)
        .unwrap();
        let mut net = DenseNet::new(&[10, 32, 2], 0, InitRule::UniformFanIn).unwrap();
        let mut opt = OptimizerState::sgd(0.05, &net);
        for b in batches(data.len(), 16, 0, 1).unwrap() {
            let (x, y) = data.select(&b);
            let (_, _, g) = net.loss_and_grad(x.view(), &y).unwrap();
            opt.apply(&mut net, &g, None).unwrap();
        }
        let logits = net.forward(data.images().view()).unwrap().logits;
        let correct = logits
            .rows()
            .into_iter()
            .zip(data.labels())
            .filter(|(r, &l)| (r[1] > r[0]) == (l == 1))
            .count();
        assert!(correct as f64 / data.len() as f64 > 0.99, "{correct}");
    }
}
