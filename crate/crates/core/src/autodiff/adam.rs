use thiserror::Error;

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdamError {
    #[error("beta1 and beta2 must lie in (0, 1), got {0} and {1}")]
    Betas(f64, f64),
    #[error("parameter {index}: expected {expected} values, got {got}")]
    Shape { index: usize, expected: usize, got: usize },
    #[error("parameter {index}: gradient entry {position} is {value}; step aborted")]
    NonFiniteGradient { index: usize, position: usize, value: f64 },
    #[error("expected {expected} parameters, got {got}")]
    Count { expected: usize, got: usize },
}

/// First and second moment estimates for a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// `sizes` gives the number of values of each parameter, in the order
    /// they will be passed to [`AdamState::step`].
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Result<Self, AdamError> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !unit(config.beta1) || !unit(config.beta2) {
            return Err(AdamError::Betas(config.beta1, config.beta2));
        }
        Ok(Self { config, m: sizes.iter().map(|&n| vec![0.0; n]).collect(), v: sizes.iter().map(|&n| vec![0.0; n]).collect(), t: 0 })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.v[index]
    }

    /// Applies one bias-corrected Adam update. Gradients are validated before
    /// anything is mutated, so a rejected step leaves parameters and moments
    /// untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&[f64]]) -> Result<(), AdamError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(AdamError::Count { expected: self.m.len(), got: params.len().min(grads.len()) });
        }
        for (index, (p, g)) in params.iter().zip(grads).enumerate() {
            let expected = self.m[index].len();
            for got in [p.len(), g.len()] {
                if got != expected {
                    return Err(AdamError::Shape { index, expected, got });
                }
            }
            if let Some((position, &value)) = g.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(AdamError::NonFiniteGradient { index, position, value });
            }
        }

        self.t += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.t as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for (index, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[index], &mut self.v[index]);
            for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / correction1;
                let v_hat = *vi / correction2;
                *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
