use serde::{Deserialize, Serialize};

use super::SLACK;
use crate::error::{Error, Result};

/// Null firing rate `p` and delay multiplier `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub p: f64,
    pub lambda: f64,
}

impl DetectorParams {
    /// Requires `0 < p ≤ 1` and `0 < lambda < p/2`.
    pub fn new(p: f64, lambda: f64) -> Result<Self> {
        check_rate(p)?;
        if !(lambda > 0.0 && lambda < p / 2.0) {
            return Err(Error::Regime(format!(
                "need 0 < lambda < p/2, got p = {p}, lambda = {lambda}"
            )));
        }
        Ok(DetectorParams { p, lambda })
    }

    /// Parameterization `lambda = alpha·p` with `0 < alpha < 1/2`.
    pub fn proportional(p: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::Regime(format!("need 0 < alpha < 1/2, got {alpha}")));
        }
        Self::new(p, alpha * p)
    }
}

pub(crate) fn check_rate(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Regime(format!(
            "firing rate must lie in (0, 1], got {p}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// `P(reject | H0)`.
    pub type1: f64,
    /// `P(accept | H1)`, always zero for threshold tests.
    pub type2: f64,
    pub delay_h0: f64,
    pub delay_h1: f64,
    /// `delay_h0 + delay_h1`.
    pub delay: f64,
    /// `type1 + type2 + lambda·delay`.
    pub total: f64,
}

/// Exact cost of the threshold-`k` test.
pub fn threshold_cost(p: f64, lambda: f64, k: u64) -> Result<CostBreakdown> {
    check_rate(p)?;
    if k == 0 {
        return Err(Error::Input("threshold must be at least 1".into()));
    }
    let q = 1.0 - p;
    let type1 = q.powf(k as f64);
    let delay_h0 = (1.0 - type1) / p;
    let delay_h1 = k as f64;
    let delay = delay_h0 + delay_h1;
    Ok(CostBreakdown {
        type1,
        type2: 0.0,
        delay_h0,
        delay_h1,
        delay,
        total: type1 + lambda * delay,
    })
}

/// Smallest `k ≥ 1` with `(1−p)^k ≤ lambda/(p−lambda)`.
pub fn optimal_threshold(p: f64, lambda: f64) -> Result<u64> {
    let params = DetectorParams::new(p, lambda)?;
    Ok(percentile_threshold(
        params.p,
        params.lambda / (params.p - params.lambda),
    ))
}

/// Smallest `k ≥ 1` with `(1−p)^k ≤ target`, up to a relative slack of 1e-12.
pub(crate) fn percentile_threshold(p: f64, target: f64) -> u64 {
    let q = 1.0 - p;
    let ok = |k: u64| q.powf(k as f64) <= target * (1.0 + SLACK);
    if q <= 0.0 || ok(1) {
        return 1;
    }
    let guess = (target.ln() / q.ln()).ceil().max(1.0) as u64;
    let mut k = guess;
    while k > 1 && ok(k - 1) {
        k -= 1;
    }
    while !ok(k) {
        k += 1;
    }
    k
}

/// Exhaustive minimization of the total cost over `1..=k_max`; ties go to the
/// smallest `k`.
pub fn brute_force_optimal(p: f64, lambda: f64, k_max: u64) -> Result<(u64, f64)> {
    if k_max == 0 || !(lambda > 0.0) {
        return Err(Error::Input(format!(
            "need k_max ≥ 1 and lambda > 0, got {k_max}, {lambda}"
        )));
    }
    let mut best = (1, threshold_cost(p, lambda, 1)?.total);
    for k in 2..=k_max {
        let c = threshold_cost(p, lambda, k)?.total;
        if c < best.1 - SLACK * best.1.abs().max(1.0) {
            best = (k, c);
        }
    }
    Ok(best)
}
