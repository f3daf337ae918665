use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer_norm::{layer_norm_backward, layer_norm_forward};
use crate::error::{Error, Result};

/// Weight initialization. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    #[default]
    UniformFanIn,
    /// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
    GlorotUniform,
}

impl InitRule {
    /// Half-width of the uniform draw for a layer. Also used as the noise scale
    /// by shrink-and-perturb.
    pub fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitRule::UniformFanIn => 1.0 / (fan_in as f64).sqrt(),
            InitRule::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }

    pub fn fill<R: Rng + ?Sized>(
        self,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        let b = self.bound(fan_in, fan_out);
        for v in out {
            *v = rng.random_range(-b..=b);
        }
    }
}

/// One affine layer. `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

/// A ReLU MLP with linear output logits.
///
/// The parameters captured at construction are kept as an immutable snapshot
/// for regularization toward the initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    layer_norm: bool,
    init_rule: InitRule,
    init_snapshot: Vec<Layer>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[k]` is the input to layer `k`; `inputs[0]` is the batch and
    /// `inputs[k + 1]` is the post-ReLU output of hidden layer `k`.
    pub inputs: Vec<Array2<f64>>,
    /// Input to each hidden ReLU (after layer norm when enabled).
    pub pre: Vec<Array2<f64>>,
    /// Per-row inverse standard deviations, only when layer norm is on.
    pub ln_inv_std: Vec<Option<Array1<f64>>>,
    pub logits: Array2<f64>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.logits.nrows()
    }

    /// Post-activation of hidden layer `k`.
    pub fn hidden(&self, k: usize) -> ArrayView2<'_, f64> {
        self.inputs[k + 1].view()
    }

    pub fn num_hidden(&self) -> usize {
        self.pre.len()
    }
}

/// Gradients shaped like a [`DenseNet`]'s parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        self.check_shapes(other)?;
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
        Ok(())
    }

    pub fn check_shapes(&self, other: &Gradients) -> Result<()> {
        let same = self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.dim() == b.dim())
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| a.dim() == b.dim());
        if same {
            Ok(())
        } else {
            Err(Error::Shape("gradient sets have different shapes".into()))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }
}

impl DenseNet {
    /// Builds a network with `layer_sizes[0]` inputs and `layer_sizes.last()`
    /// logits, drawing weights from a stream seeded by `seed`.
    pub fn new(layer_sizes: &[usize], seed: u64, init_rule: InitRule) -> Result<Self> {
        let mut rng = crate::rng::stream(seed, "init", 0);
        Self::with_rng(layer_sizes, init_rule, &mut rng)
    }

    pub fn with_rng<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        init_rule: InitRule,
        rng: &mut R,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "need at least an input and an output size, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "zero-width layer in {layer_sizes:?}"
            )));
        }
        let layers: Vec<Layer> = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let mut weight = Array2::zeros((fan_out, fan_in));
                init_rule.fill(
                    fan_in,
                    fan_out,
                    rng,
                    weight.as_slice_mut().expect("fresh arrays are contiguous"),
                );
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(DenseNet {
            init_snapshot: layers.clone(),
            layers,
            layer_norm: false,
            init_rule,
        })
    }

    /// Builds a network from explicit parameters; the snapshot is taken from them.
    pub fn from_layers(layers: Vec<Layer>, init_rule: InitRule) -> Result<Self> {
        Self::from_parts(layers.clone(), layers, init_rule)
    }

    pub(crate) fn from_parts(
        layers: Vec<Layer>,
        init_snapshot: Vec<Layer>,
        init_rule: InitRule,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::Shape(format!("layer {k}: bias length mismatch")));
            }
            if let Some(next) = layers.get(k + 1) {
                if next.fan_in() != l.fan_out() {
                    return Err(Error::Shape(format!(
                        "layer {k} emits {} but layer {} expects {}",
                        l.fan_out(),
                        k + 1,
                        next.fan_in()
                    )));
                }
            }
        }
        if init_snapshot.len() != layers.len()
            || init_snapshot
                .iter()
                .zip(&layers)
                .any(|(a, b)| a.weight.dim() != b.weight.dim())
        {
            return Err(Error::Shape("init snapshot does not match layers".into()));
        }
        Ok(DenseNet {
            layers,
            layer_norm: false,
            init_rule,
            init_snapshot,
        })
    }

    pub fn with_layer_norm(mut self, enabled: bool) -> Self {
        self.layer_norm = enabled;
        self
    }

    pub fn layer_norm(&self) -> bool {
        self.layer_norm
    }

    pub fn init_rule(&self) -> InitRule {
        self.init_rule
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for optimizers and interventions. Callers must keep
    /// shapes intact.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn init_snapshot(&self) -> &[Layer] {
        &self.init_snapshot
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].fan_in()];
        sizes.extend(self.layers.iter().map(Layer::fan_out));
        sizes
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::fan_out)
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Frobenius norm of each layer's weight matrix.
    pub fn weight_norms(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| l.weight.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<ForwardTrace> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch width {} but network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n - 1);
        let mut ln_inv_std = Vec::with_capacity(n - 1);
        inputs.push(batch.to_owned());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = inputs[k].dot(&layer.weight.t());
            z += &layer.bias;
            if k + 1 == n {
                return Ok(ForwardTrace {
                    inputs,
                    pre,
                    ln_inv_std,
                    logits: z,
                });
            }
            let z = if self.layer_norm {
                let (y, s) = layer_norm_forward(z.view());
                ln_inv_std.push(Some(s));
                y
            } else {
                ln_inv_std.push(None);
                z
            };
            inputs.push(z.mapv(|v| v.max(0.0)));
            pre.push(z);
        }
        unreachable!("a network always has an output layer")
    }

    /// Backprop of `grad_logits` through the trace. The ReLU subgradient at
    /// zero is 1.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        grad_logits: ArrayView2<f64>,
    ) -> Result<Gradients> {
        let n = self.layers.len();
        if trace.inputs.len() != n || trace.pre.len() != n - 1 {
            return Err(Error::Shape(
                "trace was produced by a different network".into(),
            ));
        }
        if grad_logits.dim() != trace.logits.dim() {
            return Err(Error::Shape(format!(
                "grad_logits {:?} vs logits {:?}",
                grad_logits.dim(),
                trace.logits.dim()
            )));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if trace.inputs[k].ncols() != l.fan_in() {
                return Err(Error::Shape(format!("trace layer {k} width mismatch")));
            }
        }
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![Array1::zeros(0); n];
        let mut delta = grad_logits.to_owned();
        for k in (0..n).rev() {
            weights[k] = delta.t().dot(&trace.inputs[k]);
            biases[k] = delta.sum_axis(Axis(0));
            if k == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.layers[k].weight);
            let gate = &trace.pre[k - 1];
            Zip::from(&mut upstream).and(gate).for_each(|u, &p| {
                if p < 0.0 {
                    *u = 0.0;
                }
            });
            delta = match &trace.ln_inv_std[k - 1] {
                Some(s) => layer_norm_backward(upstream.view(), gate.view(), s),
                None => upstream,
            };
        }
        Ok(Gradients { weights, biases })
    }

    /// Mean cross-entropy and gradients for one labelled batch.
    pub fn loss_and_grad(
        &self,
        batch: ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<(ForwardTrace, super::CrossEntropy, Gradients)> {
        let trace = self.forward(batch)?;
        let ce = super::cross_entropy(trace.logits.view(), labels)?;
        let grads = self.backward(&trace, ce.grad_logits.view())?;
        Ok((trace, ce, grads))
    }

    /// Re-draws a hidden neuron's incoming weights and bias from the init rule
    /// and zeroes its outgoing weights.
    pub(crate) fn reinit_neuron<R: Rng + ?Sized>(
        &mut self,
        layer: usize,
        neuron: usize,
        rng: &mut R,
    ) {
        let rule = self.init_rule;
        let l = &mut self.layers[layer];
        let (fan_in, fan_out) = (l.fan_in(), l.fan_out());
        let mut row = l.weight.row_mut(neuron);
        rule.fill(
            fan_in,
            fan_out,
            rng,
            row.as_slice_mut()
                .expect("rows of a standard-layout matrix are contiguous"),
        );
        l.bias[neuron] = 0.0;
        self.layers[layer + 1].weight.column_mut(neuron).fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = DenseNet::new(&[4, 3, 2], 7, InitRule::UniformFanIn).unwrap();
        let b = DenseNet::new(&[4, 3, 2], 7, InitRule::UniformFanIn).unwrap();
        let c = DenseNet::new(&[4, 3, 2], 8, InitRule::UniformFanIn).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.layers()[0].weight, c.layers()[0].weight);
    }

    #[test]
    fn fresh_net_has_zero_biases_and_matching_snapshot() {
        let net = DenseNet::new(&[784, 100, 100, 10], 1, InitRule::UniformFanIn).unwrap();
        assert!(net
            .layers()
            .iter()
            .all(|l| l.bias.iter().all(|b| *b == 0.0)));
        assert_eq!(net.layers(), net.init_snapshot());
        let bound = 1.0 / 784f64.sqrt();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(DenseNet::new(&[], 0, InitRule::UniformFanIn).is_err());
        assert!(DenseNet::new(&[3], 0, InitRule::UniformFanIn).is_err());
        assert!(DenseNet::new(&[3, 0, 2], 0, InitRule::UniformFanIn).is_err());
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let mut net = DenseNet::new(&[5, 4, 3], 0, InitRule::UniformFanIn).unwrap();
        for l in net.layers_mut() {
            l.weight.fill(0.0);
        }
        let t = net.forward(random_batch(6, 5, 1).view()).unwrap();
        assert!(t.logits.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_single_layer() {
        let layer = Layer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let net = DenseNet::from_layers(vec![layer], InitRule::UniformFanIn).unwrap();
        let x = array![[1.5, -2.0, 0.25]];
        assert_eq!(net.forward(x.view()).unwrap().logits, x);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = DenseNet::new(&[4, 3, 2], 0, InitRule::UniformFanIn).unwrap();
        assert!(matches!(
            net.forward(Array2::zeros((2, 5)).view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn forward_matches_naive_reference() {
        let net = DenseNet::new(&[6, 5, 4, 3], 21, InitRule::UniformFanIn).unwrap();
        let x = random_batch(4, 6, 2);
        let t = net.forward(x.view()).unwrap();
        for r in 0..4 {
            let mut act: Vec<f64> = x.row(r).to_vec();
            for (k, l) in net.layers().iter().enumerate() {
                let mut next = vec![0.0; l.fan_out()];
                for (o, nv) in next.iter_mut().enumerate() {
                    let mut s = l.bias[o];
                    for (i, a) in act.iter().enumerate() {
                        s += l.weight[(o, i)] * a;
                    }
                    *nv = if k + 1 < net.layers().len() {
                        s.max(0.0)
                    } else {
                        s
                    };
                }
                act = next;
            }
            for (c, v) in act.iter().enumerate() {
                assert!((t.logits[(r, c)] - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hidden_post_activation_is_relu_of_pre() {
        let net = DenseNet::new(&[6, 5, 4, 3], 3, InitRule::UniformFanIn)
            .unwrap()
            .with_layer_norm(true);
        let t = net.forward(random_batch(4, 6, 9).view()).unwrap();
        for k in 0..t.num_hidden() {
            Zip::from(t.hidden(k))
                .and(&t.pre[k])
                .for_each(|h, p| assert_eq!(*h, p.max(0.0)));
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let net = DenseNet::new(&[5, 4, 3], 0, InitRule::UniformFanIn).unwrap();
        let t = net.forward(random_batch(3, 5, 0).view()).unwrap();
        let g = net.backward(&t, Array2::zeros((3, 3)).view()).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dead_unit_gets_no_incoming_gradient() {
        let mut net = DenseNet::new(&[5, 4, 3], 4, InitRule::UniformFanIn).unwrap();
        net.layers_mut()[0].weight.row_mut(2).fill(0.0);
        net.layers_mut()[0].bias[2] = -1.0;
        let x = random_batch(8, 5, 5);
        let (_, _, g) = net
            .loss_and_grad(x.view(), &[0, 1, 2, 0, 1, 2, 0, 1])
            .unwrap();
        assert!(g.weights[0].row(2).iter().all(|v| *v == 0.0));
        assert_eq!(g.biases[0][2], 0.0);
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let a = DenseNet::new(&[5, 4, 3], 0, InitRule::UniformFanIn).unwrap();
        let b = DenseNet::new(&[5, 4, 4, 3], 0, InitRule::UniformFanIn).unwrap();
        let t = b.forward(random_batch(2, 5, 0).view()).unwrap();
        assert!(a.backward(&t, t.logits.view()).is_err());
    }

    #[test]
    fn reinit_zeroes_outgoing_weights() {
        let mut net = DenseNet::new(&[5, 4, 3], 0, InitRule::UniformFanIn).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        net.layers_mut()[0].bias[1] = 0.7;
        net.reinit_neuron(0, 1, &mut rng);
        assert_eq!(net.layers()[0].bias[1], 0.0);
        assert!(net.layers()[1].weight.column(1).iter().all(|v| *v == 0.0));
    }
}
