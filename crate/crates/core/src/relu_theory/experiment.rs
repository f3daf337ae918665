use serde::{Deserialize, Serialize};

use super::dynamics::{run_gd, sample_init, GdMode, TheoryConfig, TheorySummary, Trajectory};
use super::targets::{admissible_adversarial_target, adversarial_target};
use crate::error::Result;
use crate::rng;

/// How the target is placed relative to the sampled initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// `v = (−w0_{1:d}, −bias_margin)`.
    Adversarial { bias_margin: f64 },
    /// `v_{1:d} = −2π·w0_{1:d}` with a bias at `bias_fraction` of the admissible range.
    Admissible { bias_fraction: f64 },
}

/// One seeded run: draw `w0`, place the target, descend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRun {
    pub w0: Vec<f64>,
    pub target: Vec<f64>,
    pub trajectory: Trajectory,
}

pub fn run_theory(cfg: &TheoryConfig, target: TargetSpec, mode: GdMode) -> Result<TheoryRun> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, "theory-init", 0);
    let w0 = sample_init(cfg.d, cfg.init_radius, &mut rng);
    let v = match target {
        TargetSpec::Adversarial { bias_margin } => adversarial_target(&w0, bias_margin)?,
        TargetSpec::Admissible { bias_fraction } => {
            admissible_adversarial_target(&w0, bias_fraction)?.v
        }
    };
    let trajectory = run_gd(cfg, &w0, &v, mode)?;
    Ok(TheoryRun {
        w0,
        target: v,
        trajectory,
    })
}

impl TheoryRun {
    pub fn summary(&self, seed: u64) -> Result<TheorySummary> {
        self.trajectory.summary(seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relu_theory::population_loss;

    #[test]
    fn same_seed_same_run() {
        let cfg = TheoryConfig::new(3, 20, 9);
        let t = TargetSpec::Adversarial { bias_margin: 0.1 };
        let a = run_theory(&cfg, t, GdMode::Plain).unwrap();
        assert_eq!(a, run_theory(&cfg, t, GdMode::Plain).unwrap());
        let other = run_theory(&TheoryConfig::new(3, 20, 10), t, GdMode::Plain).unwrap();
        assert_ne!(a.w0, other.w0);
    }

    #[test]
    fn plain_descent_stays_above_the_zero_predictor() {
        let cfg = TheoryConfig::new(5, 300, 1);
        let run = run_theory(
            &cfg,
            TargetSpec::Adversarial { bias_margin: 0.2 },
            GdMode::Plain,
        )
        .unwrap();
        let l0 = population_loss(&[0.0; 6], &run.target).unwrap();
        assert!(run.trajectory.points.iter().all(|p| p.loss >= l0 - 1e-6));
    }
}
