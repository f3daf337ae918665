use std::sync::OnceLock;

pub(crate) const NODES: usize = 20;
/// Widest panel used by [`integrate`].
pub(crate) const MAX_PANEL: f64 = 1.5;

/// Gauss–Legendre nodes and weights on [-1, 1].
fn rule() -> &'static ([f64; NODES], [f64; NODES]) {
    static RULE: OnceLock<([f64; NODES], [f64; NODES])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = NODES;
        let mut x = [0.0; NODES];
        let mut w = [0.0; NODES];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let wt = 2.0 / ((1.0 - z * z) * dp * dp);
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = wt;
            w[n - 1 - i] = wt;
        }
        (x, w)
    })
}

/// Integrates a vector-valued `f` over `[lo, hi]`, splitting at every point of
/// `breaks` that falls strictly inside and keeping panels at most
/// [`MAX_PANEL`] wide.
pub(crate) fn integrate<const K: usize>(
    lo: f64,
    hi: f64,
    breaks: &[f64],
    f: impl Fn(f64) -> [f64; K],
) -> [f64; K] {
    let mut acc = [0.0; K];
    if hi <= lo {
        return acc;
    }
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| *b > lo && *b < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (xs, ws) = rule();
    for seg in cuts.windows(2) {
        let pieces = ((seg[1] - seg[0]) / MAX_PANEL).ceil().max(1.0) as usize;
        let h = (seg[1] - seg[0]) / pieces as f64;
        for p in 0..pieces {
            let a = seg[0] + p as f64 * h;
            let (mid, half) = (a + 0.5 * h, 0.5 * h);
            for (x, w) in xs.iter().zip(ws) {
                let v = f(mid + half * x);
                for k in 0..K {
                    acc[k] += w * half * v[k];
                }
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_are_symmetric() {
        let (x, w) = rule();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for i in 0..NODES {
            assert!((x[i] + x[NODES - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        let [v] = integrate(0.0, 1.0, &[], |x| [x.powi(39)]);
        assert!((v - 1.0 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_mass_and_kinked_integrand() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let [m] = integrate(-12.0, 12.0, &[], |x| [phi(x)]);
        assert!((m - 1.0).abs() < 1e-14);
        // E[max(z - 0.3, 0)] = phi(0.3) - 0.3 * (1 - Phi(0.3))
        let [e] = integrate(-12.0, 12.0, &[0.3], |x| [(x - 0.3).max(0.0) * phi(x)]);
        let exact = phi(0.3) - 0.3 * 0.5 * libm::erfc(0.3 / std::f64::consts::SQRT_2);
        assert!((e - exact).abs() < 1e-15);
    }
}
