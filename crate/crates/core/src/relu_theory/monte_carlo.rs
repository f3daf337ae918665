use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::normal::relu;
use super::{norm, split};
use crate::error::{Error, Result};

/// Monte Carlo estimates of the population loss and gradient with standard
/// errors, using one shared sample for both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub loss: f64,
    pub loss_se: f64,
    pub grad: Vec<f64>,
    pub grad_se: Vec<f64>,
    pub samples: usize,
}

struct Moments {
    sum: f64,
    sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sq += x * x;
    }

    fn mean_se(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        let mean = self.sum / n;
        let var = ((self.sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

pub fn monte_carlo<R: Rng + ?Sized>(
    w: &[f64],
    v: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if w.len() != v.len() || w.len() < 2 || samples < 2 {
        return Err(Error::Input(
            "monte_carlo needs matching vectors and at least 2 samples".into(),
        ));
    }
    let d = w.len() - 1;
    let (wd, bw) = split(w);
    let (vd, bv) = split(v);
    let mut loss = Moments { sum: 0.0, sq: 0.0 };
    let mut grad: Vec<Moments> = (0..=d).map(|_| Moments { sum: 0.0, sq: 0.0 }).collect();
    let mut x = vec![0.0; d];
    for _ in 0..samples {
        let (mut u, mut t) = (bw, bv);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = rng.sample(StandardNormal);
            u += wd[i] * *xi;
            t += vd[i] * *xi;
        }
        let diff = relu(u) - relu(t);
        loss.push(diff * diff);
        let g = if u >= 0.0 { 2.0 * diff } else { 0.0 };
        for (m, xi) in grad.iter_mut().zip(&x) {
            m.push(g * xi);
        }
        grad[d].push(g);
    }
    let (loss, loss_se) = loss.mean_se(samples);
    let (g, se): (Vec<f64>, Vec<f64>) = grad.iter().map(|m| m.mean_se(samples)).unzip();
    Ok(McEstimate {
        loss,
        loss_se,
        grad: g,
        grad_se: se,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub m2: f64,
    pub m2_se: f64,
    pub m4: f64,
    pub m4_se: f64,
    /// `m2 ≤ 1 + 3·SE` and `m4 ≤ 3 + 3·SE`.
    pub within_bounds: bool,
}

/// Monte Carlo `E[σ(v·x)²]` and `E[σ(v·x)⁴]` for a unit-norm `v`.
pub fn moment_validator<R: Rng + ?Sized>(
    v: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<MomentReport> {
    if v.len() < 2 || samples < 2 {
        return Err(Error::Input(
            "moment_validator needs a weight vector and at least 2 samples".into(),
        ));
    }
    if (norm(v) - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "v must have unit norm, got {}",
            norm(v)
        )));
    }
    let (vd, b) = split(v);
    let mut m2 = Moments { sum: 0.0, sq: 0.0 };
    let mut m4 = Moments { sum: 0.0, sq: 0.0 };
    for _ in 0..samples {
        let mut t = b;
        for vi in vd {
            let z: f64 = rng.sample(StandardNormal);
            t += vi * z;
        }
        let s2 = relu(t).powi(2);
        m2.push(s2);
        m4.push(s2 * s2);
    }
    let (m2, m2_se) = m2.mean_se(samples);
    let (m4, m4_se) = m4.mean_se(samples);
    Ok(MomentReport {
        m2,
        m2_se,
        m4,
        m4_se,
        within_bounds: m2 <= 1.0 + 3.0 * m2_se && m4 <= 3.0 + 3.0 * m4_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relu_theory::population_loss_grad;

    #[test]
    fn deterministic_bias_only_vector() {
        let mut rng = crate::rng::stream(0, "mc", 0);
        let r = moment_validator(&[0.0, 0.0, 1.0], 1000, &mut rng).unwrap();
        assert_eq!((r.m2, r.m4, r.m2_se), (1.0, 1.0, 0.0));
        assert!(r.within_bounds);
        assert!(moment_validator(&[0.5, 0.0, 0.0], 10, &mut rng).is_err());
    }

    #[test]
    fn half_gaussian_moments() {
        let mut rng = crate::rng::stream(1, "mc", 0);
        let r = moment_validator(&[1.0, 0.0, 0.0], 200_000, &mut rng).unwrap();
        assert!((r.m2 - 0.5).abs() < 4.0 * r.m2_se);
        assert!((r.m4 - 1.5).abs() < 4.0 * r.m4_se);
    }

    #[test]
    fn agrees_with_quadrature() {
        let w = [0.7, -0.2, 0.4, -0.3];
        let v = [-0.1, 0.9, 0.3, 0.2];
        let mut rng = crate::rng::stream(2, "mc", 0);
        let mc = monte_carlo(&w, &v, 400_000, &mut rng).unwrap();
        let (l, g) = population_loss_grad(&w, &v).unwrap();
        assert!((mc.loss - l).abs() < 4.0 * mc.loss_se);
        for i in 0..4 {
            assert!(
                (mc.grad[i] - g.grad[i]).abs() < 4.0 * mc.grad_se[i],
                "coord {i}"
            );
        }
    }
}
