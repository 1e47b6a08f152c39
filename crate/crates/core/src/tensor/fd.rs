//! Central finite-difference gradient oracle.

/// Default perturbation step for gradient checks.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// Central-difference gradient of a scalar function, evaluated coordinate by
/// coordinate: `(f(x + h·e_i) − f(x − h·e_i)) / 2h`.
///
/// The function and all arithmetic stay in 64-bit precision; callers lift f32
/// tensor data into `f64` (exactly representable) before invoking this, so no
/// 32-bit rounding enters the difference quotient.
pub fn finite_difference_gradient<F>(mut f: F, x0: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        let saved = x[i];
        x[i] = saved + h;
        let fp = f(&x);
        x[i] = saved - h;
        let fm = f(&x);
        x[i] = saved;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Max relative error between a checked gradient and the oracle gradient,
/// with denominator `max(|oracle_i|, 1e-6)` per coordinate.
pub fn max_relative_error(checked: &[f32], oracle: &[f64]) -> f64 {
    assert_eq!(checked.len(), oracle.len());
    checked
        .iter()
        .zip(oracle)
        .map(|(&c, &o)| (c as f64 - o).abs() / o.abs().max(1e-6))
        .fold(0.0, f64::max)
}
