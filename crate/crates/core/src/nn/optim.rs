use std::borrow::Cow;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Optimizer hyperparameters plus Adam's bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    first_moment: Option<Gradients>,
    second_moment: Option<Gradients>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, net: &DenseNet) -> Self {
        let moments = matches!(kind, OptimizerKind::Adam { .. });
        OptimizerState {
            kind,
            learning_rate,
            step: 0,
            first_moment: moments.then(|| Gradients::zeros_like(net)),
            second_moment: moments.then(|| Gradients::zeros_like(net)),
        }
    }

    pub fn sgd(learning_rate: f64, net: &DenseNet) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate, net)
    }

    pub fn adam(learning_rate: f64, net: &DenseNet) -> Self {
        Self::new(OptimizerKind::adam(), learning_rate, net)
    }

    pub fn moments(&self) -> Option<(&Gradients, &Gradients)> {
        self.first_moment.as_ref().zip(self.second_moment.as_ref())
    }

    pub(crate) fn moments_mut(&mut self) -> Option<(&mut Gradients, &mut Gradients)> {
        self.first_moment.as_mut().zip(self.second_moment.as_mut())
    }

    pub(crate) fn restore_moments(&mut self, first: Gradients, second: Gradients) {
        self.first_moment = Some(first);
        self.second_moment = Some(second);
    }

    /// Zeroes the moment entries of a hidden neuron's incoming row, bias and
    /// outgoing column.
    pub fn clear_neuron(&mut self, layer: usize, neuron: usize) {
        if let Some((m, v)) = self.moments_mut() {
            for g in [m, v] {
                g.weights[layer].row_mut(neuron).fill(0.0);
                g.biases[layer][neuron] = 0.0;
                g.weights[layer + 1].column_mut(neuron).fill(0.0);
            }
        }
    }

    /// One update. `extra` (penalty gradients) is added to the raw gradient
    /// before any moment update.
    pub fn apply(
        &mut self,
        net: &mut DenseNet,
        grads: &Gradients,
        extra: Option<&Gradients>,
    ) -> Result<()> {
        let reference = Gradients::zeros_like(net);
        reference.check_shapes(grads)?;
        if let Some(e) = extra {
            reference.check_shapes(e)?;
        }
        if !grads.all_finite() || extra.is_some_and(|e| !e.all_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient at optimizer step {}",
                self.step
            )));
        }
        self.step += 1;
        let total = match extra {
            Some(e) => {
                let mut t = grads.clone();
                t.add_assign(e)?;
                Cow::Owned(t)
            }
            None => Cow::Borrowed(grads),
        };
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (k, layer) in net.layers_mut().iter_mut().enumerate() {
                    layer.weight.scaled_add(-lr, &total.weights[k]);
                    layer.bias.scaled_add(-lr, &total.biases[k]);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (m, v) = self
                    .first_moment
                    .as_mut()
                    .zip(self.second_moment.as_mut())
                    .expect("adam state carries moments");
                let update = |p: &mut f64, m: &mut f64, v: &mut f64, &g: &f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                };
                for (k, layer) in net.layers_mut().iter_mut().enumerate() {
                    Zip::from(&mut layer.weight)
                        .and(&mut m.weights[k])
                        .and(&mut v.weights[k])
                        .and(&total.weights[k])
                        .for_each(update);
                    Zip::from(&mut layer.bias)
                        .and(&mut m.biases[k])
                        .and(&mut v.biases[k])
                        .and(&total.biases[k])
                        .for_each(update);
                }
            }
        }
        if !net.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite parameters after optimizer step {}",
                self.step
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{InitRule, Layer};
    use ndarray::{array, Array1};

    fn scalar_net(w: f64) -> DenseNet {
        DenseNet::from_layers(
            vec![Layer {
                weight: array![[w]],
                bias: Array1::zeros(1),
            }],
            InitRule::UniformFanIn,
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            weights: vec![array![[g]]],
            biases: vec![Array1::zeros(1)],
        }
    }

    #[test]
    fn sgd_step() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::sgd(0.1, &net);
        opt.apply(&mut net, &scalar_grad(0.5), None).unwrap();
        assert!((net.layers()[0].weight[(0, 0)] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        for g in [1e-3, 0.5, 40.0] {
            let mut net = scalar_net(1.0);
            let mut opt = OptimizerState::adam(1e-3, &net);
            opt.apply(&mut net, &scalar_grad(g), None).unwrap();
            let delta = (1.0 - net.layers()[0].weight[(0, 0)]).abs();
            // closed form: lr * |g| / (|g| + eps)
            let expected = 1e-3 * g / (g + 1e-7);
            assert!((delta - expected).abs() < 1e-15);
            assert!((0.9e-3..=1e-3).contains(&delta));
        }
    }

    #[test]
    fn zero_penalty_matches_plain_step() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::adam()] {
            let mut a = scalar_net(0.3);
            let mut b = a.clone();
            let mut oa = OptimizerState::new(kind, 0.01, &a);
            let mut ob = oa.clone();
            oa.apply(&mut a, &scalar_grad(0.2), None).unwrap();
            ob.apply(&mut b, &scalar_grad(0.2), Some(&scalar_grad(0.0)))
                .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn nan_gradient_is_reported() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::sgd(0.1, &net);
        assert!(matches!(
            opt.apply(&mut net, &scalar_grad(f64::NAN), None),
            Err(Error::Numeric(_))
        ));
    }
}
