use crate::stats::{normal_cdf, normal_pdf};
use crate::{Error, Result};

/// Diagonal jitter added to the kernel matrix.
pub const JITTER: f64 = 1e-6;
const GRID: usize = 8;

fn log_grid(lo: f64, hi: f64) -> [f64; GRID] {
    std::array::from_fn(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (GRID - 1) as f64).exp())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rbf(a: &[f64], b: &[f64], length: f64, variance: f64) -> f64 {
    variance * (-sq_dist(a, b) / (2.0 * length * length)).exp()
}

/// Lower-triangular Cholesky factor, row-major `n × n`.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

fn solve_upper_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// Gaussian-process regressor with an RBF kernel over unit-cube inputs.
/// Targets are standardized internally; predictions are in target units.
#[derive(Debug, Clone)]
pub struct Surrogate {
    xs: Vec<Vec<f64>>,
    length_scale: f64,
    signal_variance: f64,
    y_mean: f64,
    y_scale: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    log_marginal_likelihood: f64,
}

impl Surrogate {
    /// Fits the kernel hyperparameters by log-marginal-likelihood over a
    /// fixed 8 × 8 grid of length scales and signal variances.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid(format!("surrogate needs matching non-empty data, got {} / {}", xs.len(), ys.len())));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("surrogate target".into()));
        }
        let n = xs.len();
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let yc: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_scale).collect();

        let mut best: Option<Surrogate> = None;
        for &length in &log_grid(0.05, 2.0) {
            for &variance in &log_grid(0.1, 10.0) {
                let mut k = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        k[i * n + j] = rbf(&xs[i], &xs[j], length, variance);
                    }
                    k[i * n + i] += JITTER;
                }
                let Some(chol) = cholesky(&k, n) else { continue };
                let alpha = solve_upper_t(&chol, n, &solve_lower(&chol, n, &yc));
                let fit: f64 = yc.iter().zip(&alpha).map(|(a, b)| a * b).sum();
                let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
                let lml = -0.5 * fit - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                if best.as_ref().map_or(true, |b| lml > b.log_marginal_likelihood) {
                    best = Some(Surrogate {
                        xs: xs.to_vec(),
                        length_scale: length,
                        signal_variance: variance,
                        y_mean,
                        y_scale,
                        chol,
                        alpha,
                        log_marginal_likelihood: lml,
                    });
                }
            }
        }
        best.ok_or_else(|| Error::invalid("kernel matrix not positive definite for any grid setting"))
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Prior variance in target units.
    pub fn signal_variance(&self) -> f64 {
        self.signal_variance * self.y_scale * self.y_scale
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.xs.len();
        let ks: Vec<f64> = self.xs.iter().map(|xi| rbf(xi, x, self.length_scale, self.signal_variance)).collect();
        let mean: f64 = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.chol, n, &ks);
        let var = (self.signal_variance - v.iter().map(|a| a * a).sum::<f64>()).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }
}

/// Expected improvement over `best` for a maximization problem.
pub fn expected_improvement_from(mean: f64, sd: f64, best: f64) -> f64 {
    let gap = mean - best;
    if !(sd > 1e-12) {
        return gap.max(0.0);
    }
    let g = gap / sd;
    (gap * normal_cdf(g) + sd * normal_pdf(g)).max(0.0)
}

pub fn expected_improvement(s: &Surrogate, x: &[f64], best: f64) -> f64 {
    let (m, sd) = s.predict(x);
    expected_improvement_from(m, sd, best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_observation_is_interpolated() {
        let s = Surrogate::fit(&[vec![0.3, 0.7]], &[2.5]).unwrap();
        let (m, _) = s.predict(&[0.3, 0.7]);
        assert!((m - 2.5).abs() < 1e-8);
    }

    #[test]
    fn observed_points_are_reproduced() {
        let xs: Vec<Vec<f64>> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&x| vec![x]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x[0]).sin()).collect();
        let s = Surrogate::fit(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (m, sd) = s.predict(x);
            assert!((m - y).abs() < 1e-3, "{m} vs {y}");
            assert!(sd < 1e-2);
        }
    }

    #[test]
    fn variance_reverts_to_prior_far_away() {
        let xs = vec![vec![0.0], vec![0.1]];
        let s = Surrogate::fit(&xs, &[1.0, 2.0]).unwrap();
        let (_, sd) = s.predict(&[50.0]);
        assert!((sd * sd - s.signal_variance()).abs() < 1e-9 * s.signal_variance());
    }

    #[test]
    fn duplicate_points_do_not_break_the_fit() {
        let s = Surrogate::fit(&[vec![0.4], vec![0.4]], &[1.0, 1.0]).unwrap();
        let (m, _) = s.predict(&[0.4]);
        assert!((m - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Surrogate::fit(&[], &[]).is_err());
        assert!(Surrogate::fit(&[vec![0.0]], &[f64::NAN]).is_err());
        assert!(Surrogate::fit(&[vec![0.0]], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ei_closed_forms() {
        assert!((expected_improvement_from(1.0, 1.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement_from(2.0, 0.0, 1.0), 1.0);
        assert!((expected_improvement_from(2.0, 1e-9, 1.0) - 1.0).abs() < 1e-9);
        assert_eq!(expected_improvement_from(0.5, 0.0, 1.0), 0.0);
        for &(m, sd) in &[(-3.0, 0.1), (0.0, 5.0), (10.0, 0.3), (-40.0, 1.0)] {
            assert!(expected_improvement_from(m, sd, 0.0) >= 0.0);
        }
    }

    #[test]
    fn ei_vanishes_at_incumbent() {
        let xs = vec![vec![0.2], vec![0.6], vec![0.9]];
        let ys = [0.1, 0.8, 0.3];
        let s = Surrogate::fit(&xs, &ys).unwrap();
        // Posterior sd at a data point is about sqrt(JITTER) in standardized units.
        let (_, sd) = s.predict(&[0.6]);
        assert!(sd < 2.0 * JITTER.sqrt() * 0.3);
        assert!(expected_improvement(&s, &[0.6], 0.8) < 0.5 * sd);
    }
}
