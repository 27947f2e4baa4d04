/// Central finite-difference gradient estimate of a scalar function.
///
/// For each coordinate the function is evaluated at `x + step` and `x - step`
/// and the quotient uses the *actually realized* f32 step, which keeps the
/// estimate exact for quadratics up to output rounding.
pub fn finite_difference_oracle<F>(mut f: F, point: &[f32], step: f32) -> Vec<f64>
where
    F: FnMut(&[f32]) -> f64,
{
    let mut grad = Vec::with_capacity(point.len());
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        let x = point[i];
        let xp = x + step;
        let xm = x - step;
        probe[i] = xp;
        let fp = f(&probe);
        probe[i] = xm;
        let fm = f(&probe);
        probe[i] = x;
        let realized = xp as f64 - xm as f64;
        grad.push((fp - fm) / realized);
    }
    grad
}

/// Relative-error comparison used by the gradient checks: the absolute
/// difference scaled by the larger magnitude, with an absolute floor so that
/// near-zero gradients do not blow the ratio up on rounding noise.
pub fn gradient_mismatch(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_under_central_differences() {
        let f = |x: &[f32]| x.iter().map(|&v| (v as f64) * (v as f64)).sum();
        let grad = finite_difference_oracle(f, &[1.0, 2.0], 1e-4);
        assert!((grad[0] - 2.0).abs() < 1e-6, "got {}", grad[0]);
        assert!((grad[1] - 4.0).abs() < 1e-6, "got {}", grad[1]);
    }

    #[test]
    fn cubic_truncation_error_scales_with_step() {
        let f = |x: &[f32]| (x[0] as f64).powi(3);
        let coarse = finite_difference_oracle(f, &[1.0], 1e-2)[0];
        let fine = finite_difference_oracle(f, &[1.0], 1e-4)[0];
        assert!((fine - 3.0).abs() < (coarse - 3.0).abs().max(1e-9));
    }
}
