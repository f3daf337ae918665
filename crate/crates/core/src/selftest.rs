//! Oracle suites: each implementation checked against an independent reference.
//!
//! The same functions back the `selftest` subcommand (at reduced sizes) and
//! the acceptance suite (at full size).

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::detection::{brute_force_optimal, optimal_threshold, simulate_cost, threshold_cost};
use crate::error::Result;
use crate::interventions::{penalty_gradient, penalty_value, Regularizer};
use crate::nn::{cross_entropy, DenseNet, InitRule};
use crate::relu_theory::{
    cross_term, cross_term_zero_bias, moment_validator, monte_carlo, population_loss_grad,
};
use crate::rng::{self, Rng as StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag} {} ({:.1}s): {}",
            self.name, self.seconds, self.detail
        )
    }
}

fn timed(name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> Result<Check> {
    let start = Instant::now();
    let (passed, detail) = body()?;
    Ok(Check {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn gaussian_vec(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Loss, including any penalty, and the ReLU sign pattern it was computed under.
fn objective(
    net: &DenseNet,
    x: &Array2<f64>,
    y: &[usize],
    reg: Option<&Regularizer>,
) -> Result<(f64, Vec<bool>)> {
    let trace = net.forward(x.view())?;
    let ce = cross_entropy(trace.logits.view(), y)?;
    let pen = reg.map_or(0.0, |r| penalty_value(net, r));
    let mask = trace
        .pre
        .iter()
        .flat_map(|p| p.iter().map(|&v| v > 0.0))
        .collect();
    Ok((ce.loss + pen, mask))
}

/// Backprop, with penalty hooks and optional layer norm, against central
/// differences on random small networks. Parameters whose perturbation flips
/// any ReLU are skipped.
pub fn gradient_check(nets: usize, seed: u64) -> Result<Check> {
    const H: f64 = 1e-5;
    const REL: f64 = 1e-5;
    const ABS_FLOOR: f64 = 1e-9;
    timed("backprop vs finite differences", || {
        let (mut checked, mut skipped, mut worst) = (0usize, 0usize, 0.0f64);
        let mut failures = 0usize;
        for i in 0..nets {
            let mut rng = rng::stream(seed, "gradient-check", i as u64);
            let depth = rng.random_range(1..=3);
            let mut sizes = vec![rng.random_range(1..=8)];
            sizes.extend((0..depth).map(|_| rng.random_range(1..=8)));
            sizes.push(rng.random_range(2..=4));
            let init = if rng.random_bool(0.5) {
                InitRule::UniformFanIn
            } else {
                InitRule::GlorotUniform
            };
            let mut net =
                DenseNet::new(&sizes, rng.random(), init)?.with_layer_norm(rng.random_bool(0.5));
            // move away from the init snapshot so the anchored penalty is not trivially zero
            for l in net.layers_mut() {
                l.weight
                    .mapv_inplace(|w| w + 0.3 * rng.sample::<f64, _>(StandardNormal));
                l.bias
                    .mapv_inplace(|b| b + 0.3 * rng.sample::<f64, _>(StandardNormal));
            }
            let reg = match rng.random_range(0..3) {
                0 => None,
                1 => Some(Regularizer::L2 {
                    lambda: rng.random_range(0.01..1.0),
                }),
                _ => Some(Regularizer::L2Init {
                    lambda: rng.random_range(0.01..1.0),
                }),
            };
            let batch = rng.random_range(1..=5);
            let x =
                Array2::from_shape_vec((batch, sizes[0]), gaussian_vec(batch * sizes[0], &mut rng))
                    .expect("shape matches");
            let y: Vec<usize> = (0..batch)
                .map(|_| rng.random_range(0..*sizes.last().unwrap()))
                .collect();

            let (_, ce, mut grads) = net.loss_and_grad(x.view(), &y)?;
            drop(ce);
            if let Some(g) = reg.as_ref().and_then(|r| penalty_gradient(&net, r)) {
                grads.add_assign(&g)?;
            }
            let (_, base_mask) = objective(&net, &x, &y, reg.as_ref())?;
            for k in 0..net.layers().len() {
                let (rows, cols) = net.layers()[k].weight.dim();
                let coords: Vec<Option<(usize, usize)>> = (0..rows)
                    .flat_map(|r| (0..cols).map(move |c| Some((r, c))))
                    .chain((0..rows).map(|_| None))
                    .collect();
                for (n, coord) in coords.into_iter().enumerate() {
                    let bias_row = n.saturating_sub(rows * cols);
                    let analytic = match coord {
                        Some((r, c)) => grads.weights[k][[r, c]],
                        None => grads.biases[k][bias_row],
                    };
                    let probe = |delta: f64| -> Result<(f64, Vec<bool>)> {
                        let mut shifted = net.clone();
                        let l = &mut shifted.layers_mut()[k];
                        match coord {
                            Some((r, c)) => l.weight[[r, c]] += delta,
                            None => l.bias[bias_row] += delta,
                        }
                        objective(&shifted, &x, &y, reg.as_ref())
                    };
                    let (fp, mp) = probe(H)?;
                    let (fm, mm) = probe(-H)?;
                    if mp != base_mask || mm != base_mask {
                        skipped += 1;
                        continue;
                    }
                    let numeric = (fp - fm) / (2.0 * H);
                    let err = (analytic - numeric).abs();
                    let scale = analytic.abs().max(numeric.abs());
                    checked += 1;
                    if scale > 1e-6 {
                        worst = worst.max(err / scale);
                    }
                    if err > ABS_FLOOR && err > REL * scale {
                        failures += 1;
                    }
                }
            }
        }
        Ok((
            failures == 0 && checked > 0,
            format!(
                "{nets} nets, {checked} parameters checked, {skipped} kink-adjacent skipped, \
                 {failures} failures, worst relative error {worst:.2e} (tolerance {REL:.0e})"
            ),
        ))
    })
}

/// Standardized gap. A zero standard error means every sample agreed, for
/// instance a gradient whose gate event is too rare to fire once; the estimate
/// then carries no resolution and only a gap below `DEGENERATE_TOL`, far under
/// the standard error of any O(1) quantity at our sample sizes, counts as
/// agreement.
fn z_score(exact: f64, estimate: f64, se: f64) -> f64 {
    let gap = (exact - estimate).abs();
    if se > 0.0 {
        gap / se
    } else if gap <= DEGENERATE_TOL {
        0.0
    } else {
        f64::INFINITY
    }
}

const DEGENERATE_TOL: f64 = 1e-6;

/// Quadrature loss and gradient against Monte Carlo on shared samples, plus
/// the zero-bias cross term against its closed form.
pub fn population_check(pairs: usize, samples: usize, seed: u64) -> Result<Check> {
    const Z: f64 = 4.0;
    const CROSS_TOL: f64 = 1e-8;
    timed("population loss and gradient vs Monte Carlo", || {
        let dims = [2usize, 5, 10];
        let (mut worst_z, mut worst_cross) = (0.0f64, 0.0f64);
        let mut worst_pair = 0usize;
        let mut failures = 0usize;
        for i in 0..pairs {
            let mut rng = rng::stream(seed, "population-pairs", i as u64);
            let d = dims[i % dims.len()];
            let w = gaussian_vec(d + 1, &mut rng);
            let v = gaussian_vec(d + 1, &mut rng);
            let (loss, g) = population_loss_grad(&w, &v)?;
            let mut mc_rng = rng::stream(seed, "population-mc", i as u64);
            let mc = monte_carlo(&w, &v, samples, &mut mc_rng)?;
            let mut zs = vec![z_score(loss, mc.loss, mc.loss_se)];
            zs.extend(
                g.grad
                    .iter()
                    .zip(&mc.grad)
                    .zip(&mc.grad_se)
                    .map(|((a, b), se)| z_score(*a, *b, *se)),
            );
            let z = zs.into_iter().fold(0.0, f64::max);
            if z > worst_z {
                (worst_z, worst_pair) = (z, i);
            }
            failures += (z > Z) as usize;

            let mut w0 = w.clone();
            let mut v0 = v.clone();
            w0[d] = 0.0;
            v0[d] = 0.0;
            let err = (cross_term(&w0, &v0)? - cross_term_zero_bias(&w0, &v0)).abs();
            worst_cross = worst_cross.max(err);
            failures += (err > CROSS_TOL) as usize;
        }
        Ok((
            failures == 0,
            format!(
                "{pairs} pairs, {samples} samples each: worst |z| {worst_z:.2} at pair {worst_pair} (limit {Z}), \
                 worst cross-term error {worst_cross:.1e} (limit {CROSS_TOL:.0e}), {failures} failures"
            ),
        ))
    })
}

/// Percentile threshold against exhaustive search, and exact cost against simulation.
pub fn threshold_check(mc_cells: usize, trials: usize, seed: u64) -> Result<Check> {
    timed("optimal threshold vs brute force and simulation", || {
        let mut cells = Vec::new();
        for i in 1..=9 {
            let p = 0.05 * i as f64;
            for f in [0.1, 0.25, 0.45] {
                cells.push((p, f * p));
            }
        }
        let (mut worst_gap, mut failures) = (0.0f64, 0usize);
        for &(p, lambda) in &cells {
            let k = optimal_threshold(p, lambda)?;
            let cost = threshold_cost(p, lambda, k)?.total;
            let (_, best) = brute_force_optimal(p, lambda, 10_000)?;
            let gap = cost - best;
            worst_gap = worst_gap.max(gap.abs());
            failures += (gap > 1e-12) as usize;
        }
        let mut rng = rng::stream(seed, "threshold-cells", 0);
        let mut picked = cells.clone();
        picked.shuffle(&mut rng);
        picked.truncate(mc_cells);
        let mut worst_z = 0.0f64;
        for (i, &(p, lambda)) in picked.iter().enumerate() {
            let k = optimal_threshold(p, lambda)?;
            let exact = threshold_cost(p, lambda, k)?.total;
            let mut sim_rng = rng::stream(seed, "threshold-sim", i as u64);
            let sim = simulate_cost(p, lambda, k, trials, &mut sim_rng)?;
            let z = z_score(sim.total, exact, sim.total_se);
            worst_z = worst_z.max(z);
            failures += (z > 4.0) as usize;
        }
        Ok((
            failures == 0,
            format!(
                "{} grid cells, worst cost gap {worst_gap:.1e}; {} simulated cells at n = {trials}, worst |z| {worst_z:.2}",
                cells.len(),
                picked.len()
            ),
        ))
    })
}

/// Second and fourth ReLU moments of unit-norm projections.
pub fn moment_check(vectors: usize, samples: usize, seed: u64) -> Result<Check> {
    timed("ReLU moment bounds", || {
        let d = 10;
        let mut failures = 0usize;
        let mut worst = (0.0f64, 0.0f64);
        for i in 0..vectors {
            let mut rng = rng::stream(seed, "moment-vectors", i as u64);
            let mut v = gaussian_vec(d + 1, &mut rng);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            let r = moment_validator(&v, samples, &mut rng)?;
            worst = (worst.0.max(r.m2), worst.1.max(r.m4));
            failures += !r.within_bounds as usize;
        }
        let mut unit = vec![0.0; d + 1];
        unit[0] = 1.0;
        let mut rng = rng::stream(seed, "moment-spot", 0);
        let r = moment_validator(&unit, samples, &mut rng)?;
        let (z2, z4) = ((r.m2 - 0.5).abs() / r.m2_se, (r.m4 - 1.5).abs() / r.m4_se);
        let spot_ok = z2 <= 4.0 && z4 <= 4.0;
        Ok((
            failures == 0 && spot_ok,
            format!(
                "{vectors} unit vectors, {failures} out of bounds, largest m2 {:.4}, m4 {:.4}; \
                 zero-bias spot m2 {:.4} (z {z2:.2}), m4 {:.4} (z {z4:.2})",
                worst.0, worst.1, r.m2, r.m4
            ),
        ))
    })
}

/// Sizes for [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Seconds; what the CLI runs by default.
    Quick,
    /// The sizes the acceptance suite uses.
    Full,
}

pub fn run_all(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let (pairs, mc, trials, moments, moment_n) = match scale {
        Scale::Quick => (12, 200_000, 100_000, 10, 100_000),
        Scale::Full => (100, 10_000_000, 1_000_000, 100, 1_000_000),
    };
    Ok(vec![
        gradient_check(50, seed)?,
        population_check(pairs, mc, seed)?,
        threshold_check(10, trials, seed)?,
        moment_check(moments, moment_n, seed)?,
    ])
}
