use serde::{Deserialize, Serialize};

use super::AgentError;

/// Noise scales of the data-fidelity proximal map.
///
/// `sigma_w` is the measurement noise standard deviation and `sigma_lambda`
/// the proximal coupling scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    sigma_w: f64,
    sigma_lambda: f64,
}

impl NoiseParams {
    pub fn new(sigma_w: f64, sigma_lambda: f64) -> Result<Self, AgentError> {
        for (name, v) in [("sigma_w", sigma_w), ("sigma_lambda", sigma_lambda)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AgentError::InvalidParameter { name, value: v });
            }
        }
        Ok(Self { sigma_w, sigma_lambda })
    }

    /// `sigma_lambda = sigma_w * factor`, which makes the update gain exactly 1/2.
    pub fn balanced(sigma_w: f64, factor: usize) -> Result<Self, AgentError> {
        Self::new(sigma_w, sigma_w * factor as f64)
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    pub fn sigma_lambda(&self) -> f64 {
        self.sigma_lambda
    }

    /// `sigma_lambda^2 / sigma_w^2`.
    pub fn sigma2(&self) -> f64 {
        (self.sigma_lambda / self.sigma_w).powi(2)
    }

    /// `1 / (1 + sigma2 * factor^2)`, always in (0, 1).
    pub fn r(&self, factor: usize) -> f64 {
        let l2 = (factor * factor) as f64;
        1.0 / (1.0 + self.sigma2() * l2)
    }

    /// Backprojection gain `sigma_lambda^2 / (sigma_lambda^2 + factor^2 sigma_w^2)`.
    pub fn gain(&self, factor: usize) -> f64 {
        let sl2 = self.sigma_lambda * self.sigma_lambda;
        let l2 = (factor * factor) as f64;
        sl2 / (sl2 + l2 * self.sigma_w * self.sigma_w)
    }
}
