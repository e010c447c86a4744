use serde::{Deserialize, Serialize};

use crate::stats::f_survival;
use crate::{Error, Result};

pub const LOGIT_EPS: f64 = 1e-6;

/// Clamped logit, mapping metrics in `[0, 1]` onto the real line.
pub fn gaussian_transform(samples: &[f64]) -> Vec<f64> {
    samples
        .iter()
        .map(|&x| {
            let x = x.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
            (x / (1.0 - x)).ln()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    /// `f64::INFINITY` when all variation is between groups.
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub group_sizes: Vec<usize>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!("ANOVA needs at least 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::invalid(format!("every ANOVA group needs at least 2 samples, got {}", g.len())));
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("ANOVA sample".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let g = groups.len();
    let means: Vec<f64> = groups.iter().map(|s| mean(s)).collect();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;

    let constant = |s: &Vec<f64>| s.iter().all(|&x| x == s[0]);
    let ssw: f64 = if groups.iter().all(constant) {
        0.0
    } else {
        groups.iter().zip(&means).map(|(s, m)| s.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sum()
    };
    let scale = means.iter().fold(0.0f64, |a, m| a.max(m.abs())).max(f64::MIN_POSITIVE);
    let equal_means = means.iter().all(|m| (m - means[0]).abs() <= 4.0 * f64::EPSILON * scale);
    let ssb: f64 = if equal_means {
        0.0
    } else {
        groups.iter().zip(&means).map(|(s, m)| s.len() as f64 * (m - grand).powi(2)).sum()
    };

    let df_between = g - 1;
    let df_within = n - g;
    let (f_statistic, p_value) = match (ssw == 0.0, ssb == 0.0) {
        (_, true) => (0.0, 1.0),
        (true, false) => (f64::INFINITY, 0.0),
        (false, false) => {
            let f = (ssb / df_between as f64) / (ssw / df_within as f64);
            (f, f_survival(f, df_between as f64, df_within as f64))
        }
    };
    Ok(Anova { f_statistic, p_value, df_between, df_within, group_sizes: groups.iter().map(Vec::len).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn transform_examples() {
        let t = gaussian_transform(&[0.5, 0.9, 1.0, 0.0]);
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 9f64.ln()).abs() < 1e-12);
        let hi = ((1.0 - LOGIT_EPS) / LOGIT_EPS).ln();
        assert!((t[2] - hi).abs() < 1e-9);
        assert!((t[2] - 13.8155).abs() < 1e-4);
        assert!((t[3] + hi).abs() < 1e-9);
    }

    #[test]
    fn two_group_fixture() {
        let a = one_way_anova(&[vec![1.0, 2.0], vec![5.0, 6.0]]).unwrap();
        assert!((a.f_statistic - 32.0).abs() < 1e-12);
        let x: f64 = 2.0 / 34.0;
        let want = 1.0 - (1.0 - x).sqrt();
        assert!((a.p_value - want).abs() < 1e-9);
        assert!((a.p_value - 0.029_857).abs() < 1e-6);
        assert_eq!((a.df_between, a.df_within), (1, 2));
    }

    #[test]
    fn degenerate_rules() {
        let same = vec![1.0, 2.0, 3.0];
        let a = one_way_anova(&[same.clone(), same.clone(), same]).unwrap();
        assert_eq!((a.f_statistic, a.p_value), (0.0, 1.0));

        let a = one_way_anova(&[vec![0.1; 3], vec![0.7; 3]]).unwrap();
        assert_eq!((a.f_statistic, a.p_value), (f64::INFINITY, 0.0));

        let a = one_way_anova(&[vec![0.1; 3], vec![0.1; 4]]).unwrap();
        assert_eq!((a.f_statistic, a.p_value), (0.0, 1.0));
    }

    #[test]
    fn preconditions() {
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, f64::NAN], vec![3.0, 4.0]]).is_err());
    }

    fn groups_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2..8), 2..5)
    }

    proptest! {
        #[test]
        fn f_is_affine_invariant(groups in groups_strategy(), shift in -50.0f64..50.0, scale in 0.1f64..20.0) {
            let base = one_way_anova(&groups).unwrap();
            prop_assume!(base.f_statistic.is_finite() && base.f_statistic > 0.0);
            let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| x * scale + shift).collect()).collect();
            let a = one_way_anova(&moved).unwrap();
            prop_assert!((a.f_statistic - base.f_statistic).abs() <= 1e-9 * base.f_statistic.max(1.0));
        }

        #[test]
        fn bounds_hold(groups in groups_strategy()) {
            let a = one_way_anova(&groups).unwrap();
            prop_assert!(a.f_statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&a.p_value));
        }
    }
}
