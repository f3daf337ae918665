use ndarray::Zip;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseNet, Gradients};

/// Weight-space regularizers. All act on every parameter, biases included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Regularizer {
    L2 {
        lambda: f64,
    },
    L2Init {
        lambda: f64,
    },
    /// Shrink-and-Perturb, applied after every optimizer step.
    ShrinkPerturb {
        shrink: f64,
        sigma: f64,
    },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Regularizer::L2 { lambda } | Regularizer::L2Init { lambda } => {
                lambda >= 0.0 && lambda.is_finite()
            }
            Regularizer::ShrinkPerturb { shrink, sigma } => {
                (0.0..=1.0).contains(&shrink) && sigma >= 0.0 && sigma.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid regularizer {self:?}")))
        }
    }
}

/// Extra gradient to add to the loss gradient, or `None` for Shrink-and-Perturb.
pub fn penalty_gradient(net: &DenseNet, reg: &Regularizer) -> Option<Gradients> {
    let (lambda, anchored) = match *reg {
        Regularizer::L2 { lambda } => (lambda, false),
        Regularizer::L2Init { lambda } => (lambda, true),
        Regularizer::ShrinkPerturb { .. } => return None,
    };
    let mut g = Gradients::zeros_like(net);
    for (k, (layer, init)) in net.layers().iter().zip(net.init_snapshot()).enumerate() {
        if anchored {
            Zip::from(&mut g.weights[k])
                .and(&layer.weight)
                .and(&init.weight)
                .for_each(|g, &w, &w0| *g = lambda * (w - w0));
            Zip::from(&mut g.biases[k])
                .and(&layer.bias)
                .and(&init.bias)
                .for_each(|g, &b, &b0| *g = lambda * (b - b0));
        } else {
            g.weights[k].zip_mut_with(&layer.weight, |g, &w| *g = lambda * w);
            g.biases[k].zip_mut_with(&layer.bias, |g, &b| *g = lambda * b);
        }
    }
    Some(g)
}

/// `λ/2 · ‖θ − anchor‖²`; zero for Shrink-and-Perturb.
pub fn penalty_value(net: &DenseNet, reg: &Regularizer) -> f64 {
    let (lambda, anchored) = match *reg {
        Regularizer::L2 { lambda } => (lambda, false),
        Regularizer::L2Init { lambda } => (lambda, true),
        Regularizer::ShrinkPerturb { .. } => return 0.0,
    };
    let mut sq = 0.0;
    for (layer, init) in net.layers().iter().zip(net.init_snapshot()) {
        let pairs = layer
            .weight
            .iter()
            .zip(init.weight.iter())
            .chain(layer.bias.iter().zip(init.bias.iter()));
        for (&w, &w0) in pairs {
            let d = if anchored { w - w0 } else { w };
            sq += d * d;
        }
    }
    0.5 * lambda * sq
}

/// `w ← p·w + σ·ξ·bound` with ξ standard normal and `bound` the layer's init bound.
pub fn snp_apply<R: Rng + ?Sized>(net: &mut DenseNet, shrink: f64, sigma: f64, rng: &mut R) {
    let rule = net.init_rule();
    for layer in net.layers_mut() {
        let scale = sigma * rule.bound(layer.fan_in(), layer.fan_out());
        let noisy = scale != 0.0;
        for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *w *= shrink;
            if noisy {
                let xi: f64 = rng.sample(StandardNormal);
                *w += scale * xi;
            }
        }
    }
}
