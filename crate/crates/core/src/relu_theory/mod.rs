//! Population gradient descent on a single ReLU neuron with Gaussian inputs.
//!
//! Inputs are `x = (z, 1)` with `z ~ N(0, I_d)`, so the last coordinate of a
//! weight vector acts as a bias. Population quantities are computed
//! deterministically: one Gaussian direction is integrated in closed form and
//! the other by composite Gauss–Legendre quadrature.

mod dynamics;
mod experiment;
mod monte_carlo;
mod normal;
mod population;
mod quadrature;
mod targets;

pub use dynamics::{
    average_regret, recommended_alpha, run_gd, sample_init, GdMode, TheoryConfig, TheorySummary,
    Trajectory, TrajectoryPoint, DIVERGENCE_NORM,
};
pub use experiment::{run_theory, TargetSpec, TheoryRun};
pub use monte_carlo::{moment_validator, monte_carlo, McEstimate, MomentReport};
pub use normal::{norm_cdf, norm_pdf, relu};
pub use population::{
    cross_term, cross_term_zero_bias, expected_activation, population_grad, population_loss,
    population_loss_grad, relu_second_moment, reset_oracle, BivariateStats, GradResult,
};
pub use targets::{
    admissible_adversarial_target, adversarial_target, delta_bound, AdmissibleTarget,
};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm, rescaled so tiny or huge entries do not under/overflow
/// when squared.
pub(crate) fn norm(a: &[f64]) -> f64 {
    let m = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * a.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

/// Splits `w` into its input block and bias.
pub(crate) fn split(w: &[f64]) -> (&[f64], f64) {
    let d = w.len() - 1;
    (&w[..d], w[d])
}
