//! Special functions behind the ANOVA p-value and expected improvement.

use std::f64::consts::PI;

const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 10_000;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0` and `x` in `[0, 1]`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Upper tail `P(X > f)` of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0).clamp(0.0, 1.0)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median; even counts average the two central values.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};
    use statrs::function::beta::beta_reg;

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1 - x)^b and I_x(a, 1) = x^a
        for &x in &[0.01f64, 0.2, 0.5, 0.77, 0.99] {
            for &b in &[0.5, 1.0, 2.5, 7.0] {
                let want = 1.0 - (1.0 - x).powf(b);
                assert!((regularized_incomplete_beta(x, 1.0, b) - want).abs() < 1e-13);
                assert!((regularized_incomplete_beta(x, b, 1.0) - x.powf(b)).abs() < 1e-13);
            }
        }
        assert_eq!(regularized_incomplete_beta(0.0, 2.0, 3.0), 0.0);
        assert_eq!(regularized_incomplete_beta(1.0, 2.0, 3.0), 1.0);
    }

    #[test]
    fn f_survival_boundaries() {
        assert_eq!(f_survival(0.0, 2.0, 5.0), 1.0);
        assert_eq!(f_survival(f64::INFINITY, 2.0, 5.0), 0.0);
        let x: f64 = 2.0 / 34.0;
        assert!((f_survival(32.0, 1.0, 2.0) - (1.0 - (1.0 - x).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn normal_values() {
        assert!((normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-3.0) + normal_cdf(3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_median() {
        assert_eq!(mean(&[0.5, 1.0]), 0.75);
        assert_eq!(median(&[1.0, 0.5]), 0.75);
        assert!((median(&[1.0, 0.8, 0.9]) - 0.9).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn incomplete_beta_matches_reference(x in 0.0f64..1.0, a in 0.1f64..60.0, b in 0.1f64..60.0) {
            let got = regularized_incomplete_beta(x, a, b);
            let want = beta_reg(a, b, x);
            prop_assert!((got - want).abs() < 1e-10, "I_{x}({a},{b}) = {got} vs {want}");
        }

        #[test]
        fn f_survival_matches_reference(f in 0.0f64..50.0, d1 in 1u32..10, d2 in 1u32..200) {
            let dist = FisherSnedecor::new(d1 as f64, d2 as f64).unwrap();
            let got = f_survival(f, d1 as f64, d2 as f64);
            prop_assert!((got - dist.sf(f)).abs() < 1e-10);
        }

        #[test]
        fn f_survival_decreases_in_f(f in 0.01f64..40.0, step in 0.01f64..5.0, d1 in 1u32..6, d2 in 2u32..100) {
            let (d1, d2) = (d1 as f64, d2 as f64);
            prop_assert!(f_survival(f + step, d1, d2) <= f_survival(f, d1, d2));
        }
    }
}
