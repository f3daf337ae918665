use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{norm, split};
use crate::error::{Error, Result};

/// Target anti-aligned with `w0` whose bias sits `bias_margin` below `-w0`'s.
pub fn adversarial_target(w0: &[f64], bias_margin: f64) -> Result<Vec<f64>> {
    if w0.len() < 2 {
        return Err(Error::Shape(
            "weight vector needs at least one input and a bias".into(),
        ));
    }
    let (wd, b) = split(w0);
    if b > 0.0 {
        return Err(Error::Input(format!(
            "initial bias must be non-positive, got {b}"
        )));
    }
    if !(bias_margin > 0.0) {
        return Err(Error::Input(format!(
            "bias margin must be positive, got {bias_margin}"
        )));
    }
    let mut v: Vec<f64> = wd.iter().map(|x| -x).collect();
    v.push(-b - bias_margin);
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleTarget {
    pub v: Vec<f64>,
    /// `‖v‖`.
    pub c1: f64,
    /// `‖v_{1:d}‖ / ‖v‖`.
    pub c2: f64,
}

/// Target with `v_{1:d} = −2π·w0_{1:d}` and bias
/// `−bias_fraction·‖v_{1:d}‖/(2√(2π))`, for a zero-bias `w0` of radius `l`.
pub fn admissible_adversarial_target(w0: &[f64], bias_fraction: f64) -> Result<AdmissibleTarget> {
    if w0.len() < 2 {
        return Err(Error::Shape(
            "weight vector needs at least one input and a bias".into(),
        ));
    }
    let (wd, b) = split(w0);
    let l = norm(wd);
    if b != 0.0 || l == 0.0 {
        return Err(Error::Input(format!(
            "initial weights must have zero bias and nonzero radius, got bias {b}, radius {l}"
        )));
    }
    if !(0.0..=1.0).contains(&bias_fraction) {
        return Err(Error::Input(format!(
            "bias fraction must lie in [0, 1], got {bias_fraction}"
        )));
    }
    let mut v: Vec<f64> = wd.iter().map(|x| -2.0 * PI * x).collect();
    let nd = norm(&v);
    v.push(-bias_fraction * nd / (2.0 * (2.0 * PI).sqrt()));
    let c1 = norm(&v);
    Ok(AdmissibleTarget { c2: nd / c1, c1, v })
}

/// Largest admissible reset threshold for targets with `‖v‖ ≥ c1` and
/// `‖v_{1:d}‖ ≥ c2·‖v‖` (exclusive).
pub fn delta_bound(c1: f64, c2: f64) -> f64 {
    (c2 * c2 / (8.0 * PI * PI * (3f64.sqrt() + 2.0 / c1))).powi(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relu_theory::{dot, population_loss};

    #[test]
    fn adversarial_examples() {
        let v = adversarial_target(&[1.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(v, vec![-1.0, 0.0, -0.1]);
        let l0 = population_loss(&[0.0, 0.0, 0.0], &v).unwrap();
        let exact = 1.01 * 0.460172162722971 - 0.1 * 0.3969525474770118;
        assert!((l0 - exact).abs() < 1e-12, "{l0}");
        assert!((l0 - 0.4250786).abs() < 1e-7);
        assert!(adversarial_target(&[1.0, 0.2], 0.1).is_err());
        assert!(adversarial_target(&[1.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn anti_alignment() {
        let w0 = [0.3, -0.4, 1.2, -0.5];
        let v = adversarial_target(&w0, 0.2).unwrap();
        assert!((dot(&v[..3], &w0[..3]) + dot(&w0[..3], &w0[..3])).abs() < 1e-15);
    }

    #[test]
    fn admissible_examples() {
        let t = admissible_adversarial_target(&[1.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(t.v, vec![-2.0 * PI, 0.0, 0.0]);
        assert!((t.c2 - 1.0).abs() < 1e-15);
        let t = admissible_adversarial_target(&[1.0, 0.0, 0.0], 1.0).unwrap();
        assert!((t.v[2] + (PI / 2.0).sqrt()).abs() < 1e-14);
        assert!((t.v[2] + 1.25331).abs() < 1e-5);
        let bound = norm(&t.v[..2]) / (2.0 * (2.0 * PI).sqrt());
        assert!((-t.v[2] - bound).abs() < 1e-14);
        assert!(admissible_adversarial_target(&[0.0, 0.0, 0.0], 0.5).is_err());
        assert!(admissible_adversarial_target(&[1.0, 0.0, -0.1], 0.5).is_err());
    }

    #[test]
    fn delta_bound_is_tiny() {
        let b = delta_bound(2.0 * PI, 1.0);
        assert!(b > 0.0 && b < 1e-6, "{b}");
    }
}
