use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{invalid_arg, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0) || !unit(self.beta1) || !unit(self.beta2) || !(self.epsilon > 0.0) {
            return Err(invalid_arg!("bad Adam hyper-parameters {self:?}"));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step_count: u64,
}

impl Adam {
    /// Accumulators are sized from `params` and fixed from then on.
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step_count: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update. Every parameter must carry a gradient; gradients are left in place.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::InvalidState(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.numel() != self.first[i].len() {
                return Err(Error::InvalidState(format!(
                    "parameter {i} has {} elements, accumulator has {}",
                    p.numel(),
                    self.first[i].len()
                )));
            }
            if p.grad().is_none() {
                return Err(Error::InvalidState(format!("parameter {i} has no gradient")));
            }
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let g = p.grad().expect("checked above").to_vec();
            for (((w, g), m), v) in p.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_grad(value: f64, grad: f64) -> Tensor {
        let mut t = Tensor::scalar(value);
        t.accumulate_grad(&[grad]);
        t
    }

    #[test]
    fn descends_on_square() {
        let mut params = vec![with_grad(1.0, 2.0)];
        let mut opt = Adam::new(AdamConfig::with_learning_rate(0.1), &params).unwrap();
        opt.step(&mut params).unwrap();
        assert!(params[0].item().abs() < 1.0);
        assert_eq!(opt.step_count(), 1);
        assert_eq!(params[0].grad(), Some(&[2.0][..]));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![with_grad(1.25, 0.0)];
        let mut opt = Adam::new(AdamConfig::with_learning_rate(0.1), &params).unwrap();
        opt.step(&mut params).unwrap();
        assert_eq!(params[0].item(), 1.25);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut opt = Adam::new(AdamConfig::with_learning_rate(0.05), &params).unwrap();
        for _ in 0..500 {
            let w = params[0].item();
            params[0].zero_grad();
            params[0].accumulate_grad(&[2.0 * (w - 3.0)]);
            opt.step(&mut params).unwrap();
        }
        assert!((params[0].item() - 3.0).abs() < 0.05, "w = {}", params[0].item());
    }

    #[test]
    fn missing_grad_is_invalid_state() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut opt = Adam::new(AdamConfig::default(), &params).unwrap();
        assert!(matches!(opt.step(&mut params), Err(Error::InvalidState(_))));
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(Adam::new(cfg, &[]).is_err());
    }
}
