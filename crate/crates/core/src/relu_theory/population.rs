use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::normal::{norm_cdf, norm_pdf, relu};
use super::quadrature::{integrate, MAX_PANEL};
use super::{dot, norm, split};
use crate::error::{Error, Result};

/// Half-width of the truncated integration range, in standard deviations.
const TAIL: f64 = 12.0;
/// Relative size below which the component of `v` orthogonal to `w` is dropped.
const RANK_TOL: f64 = 1e-10;

/// Sufficient statistics of the jointly Gaussian pair `(w·x, v·x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateStats {
    pub m_w: f64,
    pub m_v: f64,
    pub s_w: f64,
    pub s_v: f64,
    pub c: f64,
}

impl BivariateStats {
    pub fn new(w: &[f64], v: &[f64]) -> Result<Self> {
        check_pair(w, v)?;
        let ((wd, m_w), (vd, m_v)) = (split(w), split(v));
        Ok(BivariateStats {
            m_w,
            m_v,
            s_w: norm(wd),
            s_v: norm(vd),
            c: dot(wd, vd),
        })
    }
}

fn check_pair(w: &[f64], v: &[f64]) -> Result<()> {
    if w.len() != v.len() || w.len() < 2 {
        return Err(Error::Shape(format!(
            "weight vectors must share a length of at least 2, got {} and {}",
            w.len(),
            v.len()
        )));
    }
    Ok(())
}

/// `E[σ(m + s·z)]` for standard normal `z`.
fn relu_mean(m: f64, s: f64) -> f64 {
    if s == 0.0 {
        return relu(m);
    }
    let t = m / s;
    m * norm_cdf(t) + s * norm_pdf(t)
}

/// `E[σ(m + s·z)²]` for standard normal `z`.
pub fn relu_second_moment(m: f64, s: f64) -> f64 {
    if s == 0.0 {
        return relu(m).powi(2);
    }
    let t = m / s;
    (m * m + s * s) * norm_cdf(t) + m * s * norm_pdf(t)
}

/// `E[σ(w·x)]`.
pub fn expected_activation(w: &[f64]) -> f64 {
    let (wd, b) = split(w);
    relu_mean(b, norm(wd))
}

/// True iff the expected activation is at most `delta`.
pub fn reset_oracle(w: &[f64], delta: f64) -> bool {
    expected_activation(w) <= delta
}

/// `E[σ(w·x)σ(v·x)]` for zero-bias `w`, `v` via the arc-cosine kernel.
pub fn cross_term_zero_bias(w: &[f64], v: &[f64]) -> f64 {
    let (wd, _) = split(w);
    let (vd, _) = split(v);
    let (nw, nv) = (norm(wd), norm(vd));
    if nw == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let theta = (dot(wd, vd) / (nw * nv)).clamp(-1.0, 1.0).acos();
    nw * nv * (theta.sin() + (PI - theta) * theta.cos()) / (2.0 * PI)
}

/// `w·x = m_w + s_w·z1` and `v·x = m_v + c1·z1 + c2·z2` with independent
/// standard normals `z1 = e1·x`, `z2 = e2·x`.
struct Frame {
    m_w: f64,
    s_w: f64,
    m_v: f64,
    c1: f64,
    c2: f64,
    e1: Vec<f64>,
    e2: Option<Vec<f64>>,
    dropped: bool,
}

impl Frame {
    /// Requires `s_w > 0`.
    fn new(w: &[f64], v: &[f64]) -> Frame {
        let ((wd, m_w), (vd, m_v)) = (split(w), split(v));
        let s_w = norm(wd);
        let e1: Vec<f64> = wd.iter().map(|x| x / s_w).collect();
        let c1 = dot(vd, &e1);
        let rest: Vec<f64> = vd.iter().zip(&e1).map(|(v, e)| v - c1 * e).collect();
        let c2 = norm(rest.as_slice());
        let (c2, e2, dropped) = if c2 > RANK_TOL * norm(vd) {
            (c2, Some(rest.iter().map(|r| r / c2).collect()), false)
        } else {
            (0.0, None, c2 > 0.0)
        };
        Frame {
            m_w,
            s_w,
            m_v,
            c1,
            c2,
            e1,
            e2,
            dropped,
        }
    }

    fn rank(&self) -> usize {
        1 + self.e2.is_some() as usize
    }

    /// Integration range for `z1` restricted to `w·x ≥ 0`, plus breakpoints
    /// around the kink of `E[σ(v·x) | z1]`.
    fn range(&self) -> (f64, f64, Vec<f64>) {
        let z0 = -self.m_w / self.s_w;
        let lo = z0.max(-TAIL);
        let hi = z0.max(0.0) + TAIL;
        let mut breaks = Vec::new();
        if self.c1 != 0.0 {
            let kink = -self.m_v / self.c1;
            breaks.push(kink);
            // Resolve the smoothed kink whose width is c2/|c1|.
            let mut h = self.c2 / self.c1.abs();
            while h > 0.0 && h < MAX_PANEL {
                breaks.push(kink - h);
                breaks.push(kink + h);
                h *= 4.0;
            }
        }
        (lo, hi, breaks)
    }

    /// Returns `[E[σ(U)σ(V)], E[g z1], E[g z2], E[g]]` with
    /// `g = 2(σ(U) − σ(V))·1{U ≥ 0}`.
    fn moments(&self) -> [f64; 4] {
        let (lo, hi, breaks) = self.range();
        integrate(lo, hi, &breaks, |z1| {
            let u = self.m_w + self.s_w * z1;
            let mu = self.m_v + self.c1 * z1;
            let (m, stein) = if self.c2 > 0.0 {
                let t = mu / self.c2;
                let cdf = norm_cdf(t);
                (mu * cdf + self.c2 * norm_pdf(t), self.c2 * cdf)
            } else {
                (relu(mu), 0.0)
            };
            let p = norm_pdf(z1);
            let diff = 2.0 * (u - m) * p;
            [u * m * p, diff * z1, -2.0 * stein * p, diff]
        })
    }
}

/// `E[σ(w·x)σ(v·x)]` for arbitrary biases.
pub fn cross_term(w: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(w, v)?;
    let (wd, m_w) = split(w);
    if norm(wd) == 0.0 {
        return Ok(relu(m_w) * expected_activation(v));
    }
    Ok(Frame::new(w, v).moments()[0])
}

/// Population squared error `E[(σ(w·x) − σ(v·x))²]`, floored at zero.
pub fn population_loss(w: &[f64], v: &[f64]) -> Result<f64> {
    let s = BivariateStats::new(w, v)?;
    let cross = cross_term(w, v)?;
    Ok(loss_from(&s, cross))
}

fn loss_from(s: &BivariateStats, cross: f64) -> f64 {
    (relu_second_moment(s.m_w, s.s_w) + relu_second_moment(s.m_v, s.s_v) - 2.0 * cross).max(0.0)
}

/// Population gradient together with the rank of the reduced Gaussian frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradResult {
    pub grad: Vec<f64>,
    /// Number of independent Gaussian directions spanned by `w` and `v` inputs.
    pub rank: usize,
    /// True when `v` had a numerically negligible component orthogonal to `w`
    /// that was dropped.
    pub reduced: bool,
}

/// `E[2(σ(w·x) − σ(v·x))·x·1{w·x ≥ 0}]`.
pub fn population_grad(w: &[f64], v: &[f64]) -> Result<GradResult> {
    population_loss_grad(w, v).map(|(_, g)| g)
}

/// Loss and gradient sharing one quadrature pass.
pub fn population_loss_grad(w: &[f64], v: &[f64]) -> Result<(f64, GradResult)> {
    let s = BivariateStats::new(w, v)?;
    let d = w.len() - 1;
    let mut grad = vec![0.0; d + 1];
    if s.s_w == 0.0 {
        // U is constant: the gate is 1{m_w ≥ 0} and E[σ(V)x] = Φ(m_v/s_v)·v by Stein.
        // At w = 0 the neuron outputs exactly zero everywhere and is treated as
        // inactive. Exact descent never lands there, but a geometrically
        // shrinking iterate can underflow to it, and the `≥` gate would then
        // pull it across the kink in a single step.
        let gate = if s.m_w > 0.0 { 2.0 } else { 0.0 };
        let ev = relu_mean(s.m_v, s.s_v);
        if gate > 0.0 {
            let slope = if s.s_v > 0.0 {
                norm_cdf(s.m_v / s.s_v)
            } else {
                0.0
            };
            for (g, vi) in grad.iter_mut().zip(&v[..d]) {
                *g = -gate * slope * vi;
            }
            grad[d] = gate * (relu(s.m_w) - ev);
        }
        let cross = relu(s.m_w) * ev;
        let rank = (s.s_v > 0.0) as usize;
        return Ok((
            loss_from(&s, cross),
            GradResult {
                grad,
                rank,
                reduced: false,
            },
        ));
    }
    let frame = Frame::new(w, v);
    let [cross, gz1, gz2, g0] = frame.moments();
    for (i, g) in grad[..d].iter_mut().enumerate() {
        *g = gz1 * frame.e1[i] + frame.e2.as_ref().map_or(0.0, |e2| gz2 * e2[i]);
    }
    grad[d] = g0;
    Ok((
        loss_from(&s, cross),
        GradResult {
            grad,
            rank: frame.rank(),
            reduced: frame.dropped,
        },
    ))
}
