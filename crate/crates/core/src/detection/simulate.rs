use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use super::threshold::check_rate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// The neuron fires at rate `p`.
    Alive,
    /// The neuron never fires.
    Dead,
}

/// Monte Carlo outcome of the threshold test under one hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedArm {
    pub hypothesis: Hypothesis,
    pub reject_rate: f64,
    pub reject_se: f64,
    pub mean_tau: f64,
    pub tau_se: f64,
    pub trials: usize,
}

fn mean_se(sum: f64, sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / nf).sqrt())
}

/// Runs `trials` independent threshold-`k` tests on streams drawn under `hypothesis`.
pub fn simulate_test<R: Rng + ?Sized>(
    p: f64,
    k: u64,
    hypothesis: Hypothesis,
    trials: usize,
    rng: &mut R,
) -> Result<SimulatedArm> {
    check_rate(p)?;
    if k == 0 || trials == 0 {
        return Err(Error::Input("need k ≥ 1 and at least one trial".into()));
    }
    let geo = Geometric::new(p).map_err(|e| Error::Input(e.to_string()))?;
    let (mut rej, mut tau_sum, mut tau_sq) = (0usize, 0.0, 0.0);
    for _ in 0..trials {
        let (tau, reject) = match hypothesis {
            Hypothesis::Dead => (k, true),
            Hypothesis::Alive => {
                // first firing time on {1, 2, …}
                let first = geo.sample(rng).saturating_add(1);
                if first <= k {
                    (first, false)
                } else {
                    (k, true)
                }
            }
        };
        rej += reject as usize;
        tau_sum += tau as f64;
        tau_sq += (tau as f64).powi(2);
    }
    let r = rej as f64;
    let (reject_rate, reject_se) = mean_se(r, r, trials);
    let (mean_tau, tau_se) = mean_se(tau_sum, tau_sq, trials);
    Ok(SimulatedArm {
        hypothesis,
        reject_rate,
        reject_se,
        mean_tau,
        tau_se,
        trials,
    })
}

/// Empirical cost with both arms simulated independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCost {
    pub alive: SimulatedArm,
    pub dead: SimulatedArm,
    pub total: f64,
    pub total_se: f64,
}

pub fn simulate_cost<R: Rng + ?Sized>(
    p: f64,
    lambda: f64,
    k: u64,
    trials: usize,
    rng: &mut R,
) -> Result<SimulatedCost> {
    let alive = simulate_test(p, k, Hypothesis::Alive, trials, rng)?;
    let dead = simulate_test(p, k, Hypothesis::Dead, trials, rng)?;
    // type-1 indicator and tau are dependent within a trial; the bound below
    // treats them as perfectly correlated, which is conservative.
    let se_h0 = alive.reject_se + lambda * alive.tau_se;
    let total =
        alive.reject_rate + (1.0 - dead.reject_rate) + lambda * (alive.mean_tau + dead.mean_tau);
    Ok(SimulatedCost {
        alive,
        dead,
        total,
        total_se: (se_h0.powi(2) + (lambda * dead.tau_se).powi(2) + dead.reject_se.powi(2)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::threshold_cost;

    #[test]
    fn dead_arm_is_deterministic() {
        let mut rng = crate::rng::stream(0, "det", 0);
        let a = simulate_test(0.3, 6, Hypothesis::Dead, 100, &mut rng).unwrap();
        assert_eq!((a.reject_rate, a.mean_tau, a.tau_se), (1.0, 6.0, 0.0));
    }

    #[test]
    fn certain_firing() {
        let mut rng = crate::rng::stream(0, "det", 1);
        let a = simulate_test(1.0, 4, Hypothesis::Alive, 100, &mut rng).unwrap();
        assert_eq!((a.reject_rate, a.mean_tau), (0.0, 1.0));
    }

    #[test]
    fn alive_arm_matches_formula() {
        let mut rng = crate::rng::stream(0, "det", 2);
        let a = simulate_test(0.5, 2, Hypothesis::Alive, 1_000_000, &mut rng).unwrap();
        let c = threshold_cost(0.5, 0.1, 2).unwrap();
        assert!((a.reject_rate - 0.25).abs() < 4.0 * a.reject_se);
        assert!((a.mean_tau - c.delay_h0).abs() < 4.0 * a.tau_se);
        let sim = simulate_cost(0.5, 0.1, 2, 200_000, &mut rng).unwrap();
        assert!((sim.total - c.total).abs() < 4.0 * sim.total_se);
    }
}
