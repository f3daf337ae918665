//! Parameter-free layer normalization over the feature axis.

use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Variance guard. Small enough that normalized rows have unit variance to
/// ~1e-11 for any non-degenerate input.
pub const LN_EPS: f64 = 1e-12;

/// Normalizes each row to zero mean and unit variance. Returns the normalized
/// rows and the per-row `1/sqrt(var + eps)` needed by the backward pass.
/// Rows of width 1 are degenerate and map to zeros.
pub fn layer_norm_forward(z: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let (rows, width) = z.dim();
    let mut out = Array2::zeros((rows, width));
    let mut inv_std = Array1::zeros(rows);
    if width < 2 {
        return (out, inv_std);
    }
    let n = width as f64;
    for (r, (zr, mut yr)) in z.outer_iter().zip(out.outer_iter_mut()).enumerate() {
        let mean = zr.sum() / n;
        let var = zr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = s;
        for (y, v) in yr.iter_mut().zip(zr.iter()) {
            *y = (v - mean) * s;
        }
    }
    (out, inv_std)
}

/// Backward through [`layer_norm_forward`] given its outputs `y` and the
/// cached inverse standard deviations.
pub fn layer_norm_backward(
    grad_y: ArrayView2<f64>,
    y: ArrayView2<f64>,
    inv_std: &Array1<f64>,
) -> Array2<f64> {
    let (rows, width) = y.dim();
    let mut out = Array2::zeros((rows, width));
    if width < 2 {
        return out;
    }
    let n = width as f64;
    for (r, mut gr) in out.axis_iter_mut(Axis(0)).enumerate() {
        let dy = grad_y.row(r);
        let yr = y.row(r);
        let mean_dy = dy.sum() / n;
        let mean_dy_y = dy.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        for ((g, d), yv) in gr.iter_mut().zip(dy.iter()).zip(yr.iter()) {
            *g = inv_std[r] * (d - mean_dy - yv * mean_dy_y);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_row_maps_to_zeros() {
        let z = array![[3.0, 3.0, 3.0, 3.0]];
        let (y, _) = layer_norm_forward(z.view());
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn width_one_is_degenerate() {
        let z = array![[5.0], [-2.0]];
        let (y, _) = layer_norm_forward(z.view());
        assert!(y.iter().all(|v| *v == 0.0));
        let g = layer_norm_backward(array![[1.0], [1.0]].view(), y.view(), &Array1::zeros(2));
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn normalized_rows_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = Array2::from_shape_fn((6, 17), |_| rng.random_range(-2.0..2.0));
        let (y, _) = layer_norm_forward(z.view());
        for row in y.outer_iter() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() <= 1e-12, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-9, "var {var}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = Array2::from_shape_fn((3, 7), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((3, 7), |_| rng.random_range(-1.0..1.0));
        // scalar objective: sum(w * LN(z))
        let f = |z: &Array2<f64>| (layer_norm_forward(z.view()).0 * &w).sum();
        let (y, s) = layer_norm_forward(z.view());
        let g = layer_norm_backward(w.view(), y.view(), &s);
        let h = 1e-5;
        for idx in [(0, 0), (1, 3), (2, 6), (0, 4)] {
            let mut zp = z.clone();
            zp[idx] += h;
            let mut zm = z.clone();
            zm[idx] -= h;
            let fd = (f(&zp) - f(&zm)) / (2.0 * h);
            let rel = (fd - g[idx]).abs() / fd.abs().max(g[idx].abs()).max(1e-8);
            assert!(rel <= 1e-6, "{idx:?}: fd {fd} analytic {}", g[idx]);
        }
    }
}
