use rand::seq::index::sample;

use super::Parameter;
use crate::rng;
use crate::{Result, Scalar};

/// A scalar loss over a set of parameters with an analytic gradient.
pub trait Objective<T: Scalar> {
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>>;

    /// Loss at the current parameter values.
    fn loss(&mut self) -> Result<T>;

    /// Zeroes gradients, then computes the loss and fills every gradient.
    fn loss_and_gradients(&mut self) -> Result<T>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Minimum number of coordinates compared (spread over all parameters).
    pub samples: usize,
    pub seed: u64,
    /// Denominator floor for the relative error, so that exact-zero and
    /// round-off-sized gradients do not produce spurious ratios.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, samples: 100, seed: 0, floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates whose central difference changes with the step size,
    /// i.e. the perturbation crosses a ReLU kink or a max-pool switch.
    pub skipped_kinks: usize,
    /// (parameter name, flat index) of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compares analytic gradients against central differences
/// `(L(p+h) − L(p−h)) / 2h` on sampled coordinates. Coordinates where the
/// loss is not smooth at scale `h` are detected by re-estimating with `h/2`
/// and skipped; more coordinates are drawn until `samples` have been checked
/// or the parameters are exhausted.
pub fn finite_difference_check<T: Scalar, O: Objective<T>>(objective: &mut O, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    objective.loss_and_gradients()?;
    let analytic: Vec<(String, Vec<f64>)> = objective
        .parameters_mut()
        .iter()
        .map(|p| (p.name.clone(), p.grad.to_f64_vec()))
        .collect();

    // Candidate order: a seeded permutation within each parameter, interleaved
    // across parameters so that every tensor is covered.
    let mut rng = rng::stream(cfg.seed, "gradcheck");
    let orders: Vec<Vec<usize>> = analytic
        .iter()
        .map(|(_, g)| sample(&mut rng, g.len(), g.len()).into_vec())
        .collect();
    let longest = orders.iter().map(Vec::len).max().unwrap_or(0);
    let mut candidates = Vec::new();
    for k in 0..longest {
        for (pi, order) in orders.iter().enumerate() {
            if let Some(&i) = order.get(k) {
                candidates.push((pi, i));
            }
        }
    }

    let h = cfg.step;
    let mut report = GradCheckReport { max_relative_error: 0.0, checked: 0, skipped_kinks: 0, worst: None };
    for (pi, i) in candidates {
        if report.checked >= cfg.samples {
            break;
        }
        let fd = |obj: &mut O, step: f64| -> Result<f64> {
            let orig = obj.parameters_mut()[pi].value.data()[i];
            obj.parameters_mut()[pi].value.data_mut()[i] = orig + T::lit(step);
            let plus = obj.loss()?.as_f64();
            obj.parameters_mut()[pi].value.data_mut()[i] = orig - T::lit(step);
            let minus = obj.loss()?.as_f64();
            obj.parameters_mut()[pi].value.data_mut()[i] = orig;
            Ok((plus - minus) / (2.0 * step))
        };
        let numeric = fd(objective, h)?;
        let half = fd(objective, h / 2.0)?;
        if (numeric - half).abs() > 1e-6 * numeric.abs().max(1.0) {
            report.skipped_kinks += 1;
            continue;
        }
        let a = analytic[pi].1[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst = Some((analytic[pi].0.clone(), i));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    struct Quadratic(Parameter<f64>);

    impl Objective<f64> for Quadratic {
        fn parameters_mut(&mut self) -> Vec<&mut Parameter<f64>> {
            vec![&mut self.0]
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(self.0.value.data().iter().map(|p| p * p).sum())
        }
        fn loss_and_gradients(&mut self) -> Result<f64> {
            let g: Vec<f64> = self.0.value.data().iter().map(|p| 2.0 * p).collect();
            self.0.grad = Tensor::from_vec(&[g.len()], g)?;
            self.loss()
        }
    }

    struct Constant(Parameter<f64>);

    impl Objective<f64> for Constant {
        fn parameters_mut(&mut self) -> Vec<&mut Parameter<f64>> {
            vec![&mut self.0]
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(4.2)
        }
        fn loss_and_gradients(&mut self) -> Result<f64> {
            self.0.zero_grad();
            Ok(4.2)
        }
    }

    #[test]
    fn quadratic_is_exact() {
        let mut q = Quadratic(Parameter::new("p", Tensor::from_f64(&[1], &[3.0]).unwrap()));
        q.loss_and_gradients().unwrap();
        assert_eq!(q.0.grad.data()[0], 6.0);
        let r = finite_difference_check(&mut q, &GradCheckConfig::default()).unwrap();
        assert_eq!(r.checked, 1);
        assert!(r.max_relative_error < 1e-9, "{r:?}");
        assert_eq!(q.0.value.data()[0], 3.0);
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut c = Constant(Parameter::new("p", Tensor::full(&[150], 0.3)));
        let r = finite_difference_check(&mut c, &GradCheckConfig::default()).unwrap();
        assert_eq!(r.checked, 100);
        assert_eq!(r.max_relative_error, 0.0);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        struct Wrong(Parameter<f64>);
        impl Objective<f64> for Wrong {
            fn parameters_mut(&mut self) -> Vec<&mut Parameter<f64>> {
                vec![&mut self.0]
            }
            fn loss(&mut self) -> Result<f64> {
                Ok(self.0.value.data().iter().map(|p| p * p * p).sum())
            }
            fn loss_and_gradients(&mut self) -> Result<f64> {
                let g: Vec<f64> = self.0.value.data().iter().map(|p| 2.0 * p * p).collect();
                self.0.grad = Tensor::from_vec(&[g.len()], g)?;
                self.loss()
            }
        }
        let mut w = Wrong(Parameter::new("p", Tensor::full(&[4], 1.5)));
        let r = finite_difference_check(&mut w, &GradCheckConfig::default()).unwrap();
        assert!(r.max_relative_error > 0.3);
    }
}
