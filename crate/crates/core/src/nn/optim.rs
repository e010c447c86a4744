use serde::{Deserialize, Serialize};

use super::Parameter;
use crate::{Error, Result, Scalar};

/// Serializable optimizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerSpec {
    Sgd { learning_rate: f64 },
    Adam { learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerSpec {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerSpec::Sgd { learning_rate }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerSpec::Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerSpec::Sgd { learning_rate } | OptimizerSpec::Adam { learning_rate, .. } => learning_rate,
        }
    }
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::adam(1e-3)
    }
}

/// Optimizer state: its `OptimizerSpec`, a step counter and Adam moments per parameter
/// (in the order parameters are passed to [`Optimizer::step`]).
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    spec: OptimizerSpec,
    steps: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(spec: OptimizerSpec) -> Result<Self> {
        let lr = spec.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Optimizer { spec, steps: 0, first: Vec::new(), second: Vec::new() })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update and zeroes the gradients. A non-finite gradient
    /// anywhere aborts the whole step before any parameter changes.
    pub fn step(&mut self, params: &mut [&mut Parameter<T>]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {}", p.name)));
        }
        if let OptimizerSpec::Adam { .. } = self.spec {
            if self.first.is_empty() {
                self.first = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
                self.second = self.first.clone();
            }
            if self.first.len() != params.len()
                || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len())
            {
                return Err(Error::shape("optimizer moments do not match parameter shapes".to_string()));
            }
        }
        self.steps += 1;
        match self.spec {
            OptimizerSpec::Sgd { learning_rate } => {
                let lr = T::lit(learning_rate);
                for p in params.iter_mut() {
                    let Parameter { value, grad, .. } = &mut **p;
                    for (v, &g) in value.data_mut().iter_mut().zip(grad.data()) {
                        *v -= lr * g;
                    }
                }
            }
            OptimizerSpec::Adam { learning_rate, beta1, beta2, epsilon } => {
                let t = self.steps as i32;
                let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                let c1 = T::one() - T::lit(beta1.powi(t));
                let c2 = T::one() - T::lit(beta2.powi(t));
                let (lr, eps) = (T::lit(learning_rate), T::lit(epsilon));
                for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
                    let Parameter { value, grad, .. } = &mut **p;
                    for (((w, &g), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        if g == T::zero() && *mi == T::zero() && *vi == T::zero() {
                            continue;
                        }
                        *mi = b1 * *mi + (T::one() - b1) * g;
                        *vi = b2 * *vi + (T::one() - b2) * g * g;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        for p in params.iter_mut() {
            p.zero_grad();
        }
        Ok(())
    }
}
