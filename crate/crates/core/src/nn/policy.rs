use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Log-density of `action` under a diagonal Gaussian with mean `mean` and
/// per-dimension `log_std`.
pub fn gaussian_logprob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Differential entropy `Σ ½ln(2πe) + log σ`.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + HALF_LN_2PI + ls).sum()
}

/// State-conditioned mean with a state-independent learnable `log_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

/// Gradients for a [`GaussianPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrads {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean: Mlp, initial_log_std: f64) -> Self {
        let dim = mean.output_dim();
        Self {
            mean,
            log_std: vec![initial_log_std; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_std.len() != self.mean.output_dim() {
            return Err(Error::mismatch(self.mean.output_dim(), self.log_std.len()));
        }
        if self.log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("log_std", "non-finite entry"));
        }
        Ok(())
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        gaussian_logprob(mean, &self.log_std, action)
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(&self.log_std)
    }

    /// Draws `mean + σ·ε`, returning `(action, log_prob, mean)`.
    pub fn sample(&self, observation: &[f64], rng: &mut impl Rng) -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let mean = self.mean.predict(observation)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let logp = self.log_prob(&mean, &action);
        Ok((action, logp, mean))
    }

    pub fn zero_grads(&self) -> PolicyGrads {
        PolicyGrads {
            mean: self.mean.zeros_like(),
            log_std: vec![0.0; self.log_std.len()],
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.mean.param_slices_mut();
        out.push(self.log_std.as_mut_slice());
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.mean.param_slices();
        out.push(self.log_std.as_slice());
        out
    }
}

impl PolicyGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.mean.param_slices();
        out.push(self.log_std.as_slice());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.mean.param_slices_mut();
        out.push(self.log_std.as_mut_slice());
        out
    }
}
