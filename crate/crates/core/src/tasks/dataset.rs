use ndarray::{Array2, Axis};
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng;

/// Labelled examples stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(images: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.nrows() == 0 || images.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "dataset needs a positive number of rows matching the labels, got {} rows and {} labels",
                images.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Input(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn images(&self) -> &Array2<f64> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub(crate) fn with_images(&self, images: Array2<f64>) -> Dataset {
        Dataset {
            images,
            labels: self.labels.clone(),
            classes: self.classes,
        }
    }

    pub(crate) fn with_labels(&self, labels: Vec<usize>) -> Dataset {
        Dataset {
            images: self.images.clone(),
            labels,
            classes: self.classes,
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (
            self.images.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// `n` distinct examples drawn uniformly without replacement, in draw order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::Input(format!(
                "cannot draw {n} examples from {}",
                self.len()
            )));
        }
        if n == self.len() {
            return Ok(self.clone());
        }
        let mut rng = rng::stream(seed, "subsample", 0);
        let idx = sample(&mut rng, self.len(), n).into_vec();
        let (images, labels) = self.select(&idx);
        Dataset::new(images, labels, self.classes)
    }
}
