use serde::{Deserialize, Serialize};

use super::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// `theta -= lr g / sqrt(v + eps)` instead of `lr g / (sqrt(v) + eps)`.
    pub epsilon_inside_sqrt: bool,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-7,
            epsilon_inside_sqrt: false,
        }
    }
}

/// Running mean of squared gradients, one buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct RmsProp<T> {
    pub config: RmsPropConfig,
    mean_square: Vec<Vec<T>>,
}

impl<T: Real> RmsProp<T> {
    pub fn new(config: RmsPropConfig, params: &[Tensor<T>]) -> Self {
        RmsProp {
            config,
            mean_square: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    /// Per-parameter running mean of squared gradients.
    pub fn mean_square(&self) -> &[Vec<T>] {
        &self.mean_square
    }

    /// `v = rho v + (1 - rho) g^2;  theta -= lr g / (sqrt(v) + eps)`, or
    /// `lr g / sqrt(v + eps)` with `epsilon_inside_sqrt`.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Vec<T>]) {
        assert_eq!(params.len(), grads.len());
        let lr = T::from_f64(self.config.learning_rate);
        let rho = T::from_f64(self.config.rho);
        let one_m_rho = T::from_f64(1.0 - self.config.rho);
        let eps = T::from_f64(self.config.epsilon);
        let inside = self.config.epsilon_inside_sqrt;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.mean_square.iter_mut()) {
            assert_eq!(p.len(), g.len());
            for ((theta, &gi), vi) in p.data_mut().iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = rho * *vi + one_m_rho * gi * gi;
                let denom = if inside { (*vi + eps).sqrt() } else { vi.sqrt() + eps };
                *theta -= lr * gi / denom;
            }
        }
    }
}
