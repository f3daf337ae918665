use std::io::Write;

use serde::{Deserialize, Serialize};

use super::threshold::{check_rate, percentile_threshold};
use super::SLACK;
use crate::error::{Error, Result};

/// SNR thresholds for two neurons with delay multipliers `alpha·p_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPairProfile {
    /// `alpha / (1 − alpha)`.
    pub alpha_bar: f64,
    pub thresholds: [u64; 2],
    pub errors: [f64; 2],
    pub total_error: f64,
    pub delays: [f64; 2],
    pub total_delay: f64,
}

/// Expected `E[τ|H0] + E[τ|H1]` for the threshold-`r` test at rate `p`.
fn delay(p: f64, r: u64) -> f64 {
    r as f64 + (1.0 - (1.0 - p).powf(r as f64)) / p
}

fn check_pair(p1: f64, p2: f64) -> Result<()> {
    check_rate(p1)?;
    check_rate(p2)?;
    if p1 > p2 || p2 >= 1.0 {
        return Err(Error::Regime(format!(
            "need 0 < p1 ≤ p2 < 1, got {p1}, {p2}"
        )));
    }
    Ok(())
}

pub fn snr_pair_profile(p1: f64, p2: f64, alpha: f64) -> Result<SnrPairProfile> {
    check_pair(p1, p2)?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Regime(format!("need 0 < alpha < 1/2, got {alpha}")));
    }
    let alpha_bar = alpha / (1.0 - alpha);
    // lambda_i/(p_i − lambda_i) = alpha_bar for lambda_i = alpha·p_i.
    let thresholds = [p1, p2].map(|p| percentile_threshold(p, alpha_bar));
    let ps = [p1, p2];
    let errors = [0, 1].map(|i| (1.0 - ps[i]).powf(thresholds[i] as f64));
    let delays = [0, 1].map(|i| delay(ps[i], thresholds[i]));
    Ok(SnrPairProfile {
        alpha_bar,
        thresholds,
        errors,
        total_error: errors[0] + errors[1],
        delays,
        total_delay: delays[0] + delays[1],
    })
}

/// A single threshold shared by both neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedProfile {
    pub threshold: u64,
    pub errors: [f64; 2],
    pub total_error: f64,
    pub total_delay: f64,
    /// The cruder per-neuron delay bound `2r`.
    pub delay_bound: f64,
}

/// Largest `r` whose weighted delay `Σ w_i·delay_i(r)` fits in `budget`.
fn largest_feasible(p: [f64; 2], weights: [f64; 2], budget: f64) -> Result<u64> {
    let cost = |r: u64| weights[0] * delay(p[0], r) + weights[1] * delay(p[1], r);
    let fits = |r: u64| cost(r) <= budget * (1.0 + SLACK);
    if !fits(1) {
        return Err(Error::Input(format!(
            "delay budget {budget} is below the minimum {} of a one-step threshold",
            cost(1)
        )));
    }
    let mut hi = 2;
    while fits(hi) {
        hi *= 2;
    }
    let mut lo = hi / 2;
    // invariant: fits(lo), !fits(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn fixed_profile(p1: f64, p2: f64, r: u64) -> FixedProfile {
    let errors = [p1, p2].map(|p| (1.0 - p).powf(r as f64));
    FixedProfile {
        threshold: r,
        errors,
        total_error: errors[0] + errors[1],
        total_delay: delay(p1, r) + delay(p2, r),
        delay_bound: 2.0 * r as f64,
    }
}

/// Largest shared threshold whose summed delay fits in `delay_budget`.
pub fn fixed_threshold_profile(p1: f64, p2: f64, delay_budget: f64) -> Result<FixedProfile> {
    check_pair(p1, p2)?;
    let r = largest_feasible([p1, p2], [1.0, 1.0], delay_budget)?;
    Ok(fixed_profile(p1, p2, r))
}

/// Variant where each neuron's delay is weighted by its penalty `alpha·p_i`
/// and the budget is the SNR pair's weighted delay.
pub fn fixed_threshold_profile_weighted(p1: f64, p2: f64, alpha: f64) -> Result<FixedProfile> {
    let snr = snr_pair_profile(p1, p2, alpha)?;
    let w = [alpha * p1, alpha * p2];
    let budget = w[0] * snr.delays[0] + w[1] * snr.delays[1];
    let r = largest_feasible([p1, p2], w, budget)?;
    Ok(fixed_profile(p1, p2, r))
}

/// Summed error of the best shared threshold under the SNR delay budget,
/// divided by the summed SNR error.
pub fn error_ratio(p1: f64, p2: f64, alpha: f64) -> Result<f64> {
    let snr = snr_pair_profile(p1, p2, alpha)?;
    let fixed = fixed_threshold_profile(p1, p2, snr.total_delay)?;
    Ok(fixed.total_error / snr.total_error)
}

/// [`error_ratio`] with the penalty-weighted delay budget.
pub fn error_ratio_weighted(p1: f64, p2: f64, alpha: f64) -> Result<f64> {
    let snr = snr_pair_profile(p1, p2, alpha)?;
    Ok(fixed_threshold_profile_weighted(p1, p2, alpha)?.total_error / snr.total_error)
}

/// Least-squares slope of `ln(ratio)` against `ln(1/alpha_bar)`.
pub fn log_ratio_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Input(
            "slope needs at least two (alpha, ratio) points".into(),
        ));
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|&(alpha, ratio)| ((1.0 - alpha).ln() - alpha.ln(), ratio.ln()))
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input(
            "slope needs at least two distinct alphas".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// `(1/2)(ln(1−p1)/ln(1−p2) − 1)`, the exponent multiplying `ln(alpha_bar)`
/// in the growth rate of the error ratio. The growth rate in `ln(1/alpha_bar)`
/// is its negation.
pub fn slope_reference(p1: f64, p2: f64) -> f64 {
    0.5 * ((1.0 - p1).ln() / (1.0 - p2).ln() - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub p1: f64,
    pub p2: f64,
    pub alpha: f64,
    pub t1: u64,
    pub t2: u64,
    pub r_star: u64,
    pub error_snr: f64,
    pub error_fixed: f64,
    pub ratio: f64,
}

pub fn ratio_grid(p1s: &[f64], p2: f64, alphas: &[f64]) -> Result<Vec<PairRow>> {
    let mut rows = Vec::with_capacity(p1s.len() * alphas.len());
    for &p1 in p1s {
        for &alpha in alphas {
            let snr = snr_pair_profile(p1, p2, alpha)?;
            let fixed = fixed_threshold_profile(p1, p2, snr.total_delay)?;
            rows.push(PairRow {
                p1,
                p2,
                alpha,
                t1: snr.thresholds[0],
                t2: snr.thresholds[1],
                r_star: fixed.threshold,
                error_snr: snr.total_error,
                error_fixed: fixed.total_error,
                ratio: fixed.total_error / snr.total_error,
            });
        }
    }
    Ok(rows)
}

pub fn write_grid_csv<W: Write>(mut out: W, rows: &[PairRow]) -> std::io::Result<()> {
    writeln!(out, "p1,p2,alpha,t1,t2,r_star,error_snr,error_fixed,ratio")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:e},{:e},{}",
            r.p1, r.p2, r.alpha, r.t1, r.t2, r.r_star, r.error_snr, r.error_fixed, r.ratio
        )?;
    }
    Ok(())
}
