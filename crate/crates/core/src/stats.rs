//! Summary statistics and Welch's two-sample t-test.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median; the average of the two middle values for even lengths.
pub fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Unbiased sample variance (divides by n − 1).
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn sample_std(v: &[f64]) -> f64 {
    libm::sqrt(sample_variance(v))
}

/// Standard error of the mean, sample std / √n.
pub fn std_error(v: &[f64]) -> f64 {
    sample_std(v) / libm::sqrt(v.len() as f64)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)` for `a, b > 0`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = libm::exp(a * libm::log(x) + b * libm::log1p(-x) - ln_beta(a, b));
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| ≥ |t|)` of Student's t with `df`
/// degrees of freedom (`df` need not be an integer).
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    for (name, v) in [("first", a), ("second", b)] {
        if v.len() < 2 {
            return Err(Error::Degenerate(format!(
                "t-test: {name} sample has {} value(s), need at least 2",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Degenerate(format!("t-test: {name} sample has non-finite values")));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    if va + vb == 0.0 {
        return Err(Error::Degenerate("t-test: both samples have zero variance".into()));
    }
    let t = diff / libm::sqrt(va + vb);
    let df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchTest {
        t,
        df,
        p_value: student_t_two_sided(t, df),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t_density(x: f64, df: f64) -> f64 {
        let c = libm::exp(libm::lgamma((df + 1.0) / 2.0) - libm::lgamma(df / 2.0))
            / libm::sqrt(df * core::f64::consts::PI);
        c * libm::pow(1.0 + x * x / df, -(df + 1.0) / 2.0)
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            return left + right + (left + right - whole) / 15.0;
        }
        simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
            + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }

    /// Two-sided tail by numerically integrating the density over the tail
    /// after the substitution x = |t| / u, which maps [|t|, ∞) onto (0, 1].
    fn oracle_two_sided(t: f64, df: f64) -> f64 {
        let t = t.abs();
        let g = |u: f64| if u <= 0.0 { 0.0 } else { t_density(t / u, df) * t / (u * u) };
        let tail = if t == 0.0 {
            0.5
        } else {
            let (fa, fm, fb) = (g(0.0), g(0.5), g(1.0));
            simpson(&g, 0.0, 1.0, fa, fm, fb, (fa + 4.0 * fm + fb) / 6.0, 1e-14, 50)
        };
        2.0 * tail
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let r = welch_ttest(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn separated_samples() {
        let a = [0.0, 0.0, 0.0, 0.0];
        let b = [10.0, 10.0 + 1e-6, 10.0 - 1e-6, 10.0 + 2e-6];
        assert!(welch_ttest(&a, &b).unwrap().p_value < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(welch_ttest(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_ttest(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn fixture_matches_integration_oracle() {
        let a = [0.9971, 0.9968, 0.9979, 0.9955, 0.9983, 0.9962, 0.9974, 0.9969];
        let b = [0.9969, 0.9981, 0.9977, 0.9986, 0.9972, 0.9979, 0.9990];
        let r = welch_ttest(&a, &b).unwrap();
        assert!((r.p_value - oracle_two_sided(r.t, r.df)).abs() < 1e-9);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn t_tail_matches_oracle_over_grid() {
        for &df in &[1.0, 2.5, 7.0, 30.0, 250.0] {
            for &t in &[0.0, 0.3, 1.0, 2.2, 4.0, 9.0] {
                let p = student_t_two_sided(t, df);
                let o = oracle_two_sided(t, df);
                assert!((p - o).abs() < 1e-9, "df={df} t={t}: {p} vs {o}");
            }
        }
        // Cauchy closed form
        let p = student_t_two_sided(1.0, 1.0);
        assert!((p - 0.5).abs() < 1e-14);
    }

    #[test]
    fn summary_statistics() {
        let v = vec![0.0, 1.0];
        assert_eq!(mean(&v), 0.5);
        assert_eq!(median(&v), 0.5);
        assert!((std_error(&v) - 0.5).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
