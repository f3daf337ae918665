use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::population::{population_loss_grad, reset_oracle};
use super::{norm, split};
use crate::error::{Error, Result};
use crate::rng;

/// `‖w‖` beyond which a run is aborted as divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdMode {
    Plain,
    L2,
    WithResetOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub d: usize,
    pub alpha: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Radius `l` of the initial and reset distribution.
    #[serde(default = "default_radius")]
    pub init_radius: f64,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    1e-4
}

fn default_radius() -> f64 {
    1.0
}

/// Largest step size covered by the descent guarantee, `1/(2(d+1))`.
pub fn recommended_alpha(d: usize) -> f64 {
    1.0 / (2.0 * (d as f64 + 1.0))
}

impl TheoryConfig {
    pub fn new(d: usize, horizon: usize, seed: u64) -> Self {
        TheoryConfig {
            d,
            alpha: 0.5 * recommended_alpha(d),
            lambda: 0.0,
            delta: default_delta(),
            init_radius: default_radius(),
            horizon,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0
            || !(self.alpha > 0.0)
            || !(self.lambda >= 0.0)
            || !(self.delta >= 0.0)
            || !(self.init_radius > 0.0)
        {
            return Err(Error::Config(format!("invalid theory config {self:?}")));
        }
        Ok(())
    }

    pub fn step_within_bound(&self) -> bool {
        self.alpha <= recommended_alpha(self.d)
    }
}

/// Draw from the uniform distribution on `l·S^{d−1} × {0}`.
pub fn sample_init<R: Rng + ?Sized>(d: usize, l: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&w);
        if n > 1e-300 {
            w.iter_mut().for_each(|x| *x *= l / n);
            w.push(0.0);
            return w;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub loss: f64,
    pub dist_to_target: f64,
    /// The step from `t` to `t + 1` was a reset.
    pub reset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub final_w: Vec<f64>,
    pub step_within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub seed: u64,
    pub horizon: usize,
    pub regret: f64,
    pub final_loss: f64,
    pub min_loss: f64,
    pub resets: usize,
    pub last_reset: Option<usize>,
}

impl Trajectory {
    pub fn resets(&self) -> usize {
        self.points.iter().filter(|p| p.reset).count()
    }

    pub fn last_reset(&self) -> Option<usize> {
        self.points.iter().rev().find(|p| p.reset).map(|p| p.t)
    }

    /// Average regret over the first `t` recorded steps.
    pub fn regret_at(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.points.len() {
            return Err(Error::Input(format!(
                "regret horizon {t} outside 1..={}",
                self.points.len()
            )));
        }
        Ok(self.points[..t].iter().map(|p| p.loss).sum::<f64>() / t as f64)
    }

    pub fn summary(&self, seed: u64) -> Result<TheorySummary> {
        let last = self
            .points
            .last()
            .ok_or_else(|| Error::Input("empty trajectory".into()))?;
        Ok(TheorySummary {
            seed,
            horizon: self.points.len(),
            regret: average_regret(self)?,
            final_loss: last.loss,
            min_loss: self
                .points
                .iter()
                .map(|p| p.loss)
                .fold(f64::INFINITY, f64::min),
            resets: self.resets(),
            last_reset: self.last_reset(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut body = String::from("t,loss,dist_to_target,reset_flag\n");
        for p in &self.points {
            body.push_str(&format!(
                "{},{:e},{:e},{}\n",
                p.t, p.loss, p.dist_to_target, p.reset as u8
            ));
        }
        out.write_all(body.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Mean recorded loss `(1/T)·Σ L(w_t)`.
pub fn average_regret(traj: &Trajectory) -> Result<f64> {
    traj.regret_at(traj.points.len().max(1))
}

/// Runs population gradient descent from `w0` towards target `v`.
///
/// `Plain` ignores `lambda`; `L2` adds `lambda·w` to the gradient;
/// `WithResetOracle` redraws `w` from the initial distribution whenever the
/// expected activation is at most `delta`, and otherwise takes a plain step.
pub fn run_gd(cfg: &TheoryConfig, w0: &[f64], v: &[f64], mode: GdMode) -> Result<Trajectory> {
    cfg.validate()?;
    if w0.len() != cfg.d + 1 || v.len() != cfg.d + 1 {
        return Err(Error::Shape(format!(
            "expected vectors of length {}, got {} and {}",
            cfg.d + 1,
            w0.len(),
            v.len()
        )));
    }
    let mut rng = rng::stream(cfg.seed, "theory-reset", 0);
    let lambda = if mode == GdMode::L2 { cfg.lambda } else { 0.0 };
    let mut w = w0.to_vec();
    let mut points = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        let (loss, g) = population_loss_grad(&w, v)?;
        let dist = w
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let reset = mode == GdMode::WithResetOracle && reset_oracle(&w, cfg.delta);
        points.push(TrajectoryPoint {
            t,
            loss,
            dist_to_target: dist,
            reset,
        });
        if reset {
            w = sample_init(cfg.d, cfg.init_radius, &mut rng);
            continue;
        }
        for (wi, gi) in w.iter_mut().zip(&g.grad) {
            *wi -= cfg.alpha * (gi + lambda * *wi);
        }
        let n = norm(&w);
        if !(n <= DIVERGENCE_NORM) {
            let (wd, b) = split(&w);
            return Err(Error::Numeric(format!(
                "gradient descent diverged at step {}: ‖w_(1:d)‖ = {:e}, bias = {:e}, alpha = {}, lambda = {}",
                t + 1,
                norm(wd),
                b,
                cfg.alpha,
                lambda
            )));
        }
    }
    Ok(Trajectory {
        points,
        final_w: w,
        step_within_bound: cfg.step_within_bound(),
    })
}
