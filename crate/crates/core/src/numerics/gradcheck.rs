//! Central finite differences for validating analytic gradients.

/// Central-difference gradient of `f` at `point` with step `h`.
pub fn central_difference<F>(mut f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            x[i] = point[i] + h;
            let plus = f(&x);
            x[i] = point[i] - h;
            let minus = f(&x);
            x[i] = point[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise relative error `|a - n| / max(|a|, |n|, floor)`.
///
/// `floor` keeps near-zero components from dominating through round-off.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let g = central_difference(|v| v[0] * v[0] + 3.0 * v[0] * v[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-9);
        assert!((g[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(max_relative_error(&[1.0, 0.0], &[1.0, 0.0], 1e-6), 0.0);
        let e = max_relative_error(&[2.0], &[2.002], 1e-6);
        assert!((e - 0.002 / 2.002).abs() < 1e-12);
        assert!(max_relative_error(&[1e-12], &[0.0], 1e-6) < 1e-5);
    }
}
