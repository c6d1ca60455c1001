//! Central finite differences for verifying hand-written gradients.

use alloc::vec::Vec;

/// Gradient components below this fraction of the largest component (or
/// below this absolute value, whichever is larger) are compared absolutely.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Numerical gradient of `f` at `x` by central differences with step `h`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i − n_i| / max(|a_i|, |n_i|, floor)`.
pub fn max_relative_error_with_floor(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs()).max(floor);
            (a - n).abs() / scale
        })
        .fold(0.0, f64::max)
}

/// Relative error with a floor of `1e-6 · max(1, ‖numeric‖∞)`, so that
/// structurally zero components are judged against finite-difference noise.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    max_relative_error_with_floor(analytic, numeric, DEFAULT_FLOOR * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_gradient() {
        let g = central_difference(|p| p[0] * p[0] * p[0] + 2.0 * p[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(max_relative_error(&[1e-9], &[2e-9]), 1e-9 / 1e-6);
        assert!((max_relative_error(&[1.0], &[1.1]) - 0.1 / 1.1).abs() < 1e-15);
    }
}
