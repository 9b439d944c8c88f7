//! Proximal policy optimisation with a clipped surrogate objective.

mod buffer;
mod train;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, AdamState, GaussianPolicy, Mlp};
pub use buffer::{compute_gae, Record, RolloutBuffer};
pub use train::{evaluate_greedy, train, Environment, TraceRow, TrainOutcome, Transition, TRACE_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub batch_size: usize,
    pub buffer_size: usize,
    /// Initial learning rate; decays linearly to `learning_rate_final`.
    pub learning_rate: f64,
    pub learning_rate_final: f64,
    /// Entropy bonus coefficient, held constant.
    pub beta: f64,
    /// Initial clip range; decays linearly to `epsilon_final`.
    pub epsilon: f64,
    pub epsilon_final: f64,
    pub lambda: f64,
    pub epochs: usize,
    /// Budget in environment steps.
    pub max_training_steps: usize,
    pub time_horizon: usize,
    pub gamma: f64,
    /// Multiplier applied to every environment reward.
    pub reward_strength: f64,
    pub value_loss_coef: f64,
    pub max_grad_norm: f64,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub initial_log_std: f64,
    /// Recorded for reference only; the policy is feedforward.
    pub memory_sequence_length: usize,
    /// Recorded for reference only; the policy is feedforward.
    pub memory_size: usize,
    /// Environment steps between trace rows.
    pub summary_frequency: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            buffer_size: 10240,
            learning_rate: 3.0e-4,
            learning_rate_final: 0.0,
            beta: 9.0e-3,
            epsilon: 0.2,
            epsilon_final: 0.1,
            lambda: 0.95,
            epochs: 5,
            max_training_steps: 5000,
            time_horizon: 64,
            gamma: 0.99,
            reward_strength: 1.0,
            value_loss_coef: 0.5,
            max_grad_norm: 0.5,
            hidden_layers: 2,
            hidden_units: 128,
            initial_log_std: -0.5,
            memory_sequence_length: 64,
            memory_size: 256,
            summary_frequency: 1,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(Error::config(format!("ppo.{field}"), msg));
        if self.batch_size == 0 {
            return err("batch_size", "must be at least 1".into());
        }
        if self.batch_size > self.buffer_size {
            return err(
                "batch_size",
                format!("{} exceeds buffer_size {}", self.batch_size, self.buffer_size),
            );
        }
        for (name, v) in [("epsilon", self.epsilon), ("epsilon_final", self.epsilon_final)] {
            if !(v > 0.0 && v < 1.0) {
                return err(name, format!("{v} outside (0, 1)"));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return err(name, format!("{v} outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("learning_rate_final", self.learning_rate_final),
            ("beta", self.beta),
            ("value_loss_coef", self.value_loss_coef),
            ("reward_strength", self.reward_strength),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(name, format!("{v} must be finite and non-negative"));
            }
        }
        if !(self.max_grad_norm > 0.0 && self.max_grad_norm.is_finite()) {
            return err("max_grad_norm", format!("{} must be positive", self.max_grad_norm));
        }
        if self.time_horizon == 0 {
            return err("time_horizon", "must be at least 1".into());
        }
        if self.hidden_units == 0 {
            return err("hidden_units", "must be at least 1".into());
        }
        if !self.initial_log_std.is_finite() {
            return err("initial_log_std", "must be finite".into());
        }
        if self.summary_frequency == 0 {
            return err("summary_frequency", "must be at least 1".into());
        }
        Ok(())
    }

    /// Layer widths for a network mapping `input` features to `output` values.
    pub fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(self.hidden_units, self.hidden_layers));
        sizes.push(output);
        sizes
    }
}

/// `exp(logp_new - logp_old)`
pub fn probability_ratio(logp_new: f64, logp_old: f64) -> f64 {
    (logp_new - logp_old).exp()
}

/// `min(r Â, clip(r, 1-ε, 1+ε) Â)`
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

pub fn linear_schedule(initial: f64, end: f64, progress: f64) -> f64 {
    initial + (end - initial) * progress
}

/// Mean losses over the minibatches of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    /// Negative mean clipped surrogate.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub minibatches: usize,
}

/// Policy and value networks with their optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub policy_optimizer: AdamState,
    pub value_optimizer: AdamState,
}

impl Agent {
    pub fn new(observation_dim: usize, action_dim: usize, config: &PpoConfig, rng: &mut impl Rng) -> Self {
        let policy = GaussianPolicy::new(
            Mlp::new(&config.layer_sizes(observation_dim, action_dim), rng),
            config.initial_log_std,
        );
        let value = Mlp::new(&config.layer_sizes(observation_dim, 1), rng);
        Self {
            policy_optimizer: AdamState::for_params(&policy.param_slices()),
            value_optimizer: AdamState::for_params(&value.param_slices()),
            policy,
            value,
        }
    }

    pub fn value_of(&self, observation: &[f64]) -> Result<f64> {
        Ok(self.value.predict(observation)?[0])
    }
}

/// Runs `config.epochs` passes of shuffled minibatch updates over `buffer`.
///
/// The loss per minibatch is
/// `-mean(clipped surrogate) + c_v * mean((V - R)²) - β * entropy`.
/// `progress` in `[0, 1]` drives the learning-rate and clip-range schedules.
pub fn ppo_update(
    buffer: &RolloutBuffer,
    agent: &mut Agent,
    config: &PpoConfig,
    progress: f64,
    rng: &mut impl Rng,
) -> Result<UpdateStats> {
    let n = buffer.advantages().len();
    if n < config.batch_size || n == 0 {
        return Err(Error::BufferTooShort {
            len: n,
            batch_size: config.batch_size,
        });
    }
    let advantages = normalise(buffer.advantages());
    let lr = linear_schedule(config.learning_rate, config.learning_rate_final, progress);
    let epsilon = linear_schedule(config.epsilon, config.epsilon_final, progress);

    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for batch in order.chunks_exact(config.batch_size) {
            let mb = minibatch_step(buffer, &advantages, batch, agent, config, lr, epsilon)?;
            stats.policy_loss += mb.policy_loss;
            stats.value_loss += mb.value_loss;
            stats.entropy += mb.entropy;
            stats.minibatches += 1;
        }
    }
    if stats.minibatches > 0 {
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
    }
    Ok(stats)
}

/// Zero-mean, unit-variance advantages; left untouched when the variance is
/// below `1e-8`.
fn normalise(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    if var < 1e-8 {
        return advantages.to_vec();
    }
    let std = var.sqrt();
    advantages.iter().map(|a| (a - mean) / std).collect()
}

fn minibatch_step(
    buffer: &RolloutBuffer,
    advantages: &[f64],
    batch: &[usize],
    agent: &mut Agent,
    config: &PpoConfig,
    lr: f64,
    epsilon: f64,
) -> Result<UpdateStats> {
    let b = batch.len() as f64;
    let mut policy_grads = agent.policy.zero_grads();
    let mut value_grads = agent.value.zeros_like();
    let mut surrogate_sum = 0.0;
    let mut sq_err_sum = 0.0;
    let inv_var: Vec<f64> = agent.policy.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();

    for &i in batch {
        let rec = &buffer.records()[i];
        let adv = advantages[i];

        let (mean, cache) = agent.policy.mean.forward(&rec.observation)?;
        let logp = agent.policy.log_prob(&mean, &rec.action);
        let ratio = probability_ratio(logp, rec.log_prob);
        let surrogate = clipped_surrogate(ratio, adv, epsilon);
        surrogate_sum += surrogate;

        // The min picks the unclipped branch whenever it is not larger; only
        // then does the objective depend on the new log-probability.
        let clipped_term = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * adv;
        if ratio * adv <= clipped_term && adv != 0.0 {
            let dloss_dlogp = -adv * ratio / b;
            let grad_mean: Vec<f64> = (0..mean.len())
                .map(|k| dloss_dlogp * (rec.action[k] - mean[k]) * inv_var[k])
                .collect();
            let (g, _) = agent.policy.mean.backward(&cache, &grad_mean)?;
            policy_grads.mean.add_scaled(&g, 1.0);
            for k in 0..mean.len() {
                let z2 = (rec.action[k] - mean[k]).powi(2) * inv_var[k];
                policy_grads.log_std[k] += dloss_dlogp * (z2 - 1.0);
            }
        }

        let (v, vcache) = agent.value.forward(&rec.observation)?;
        let err = v[0] - buffer.returns()[i];
        sq_err_sum += err * err;
        let (g, _) = agent
            .value
            .backward(&vcache, &[2.0 * config.value_loss_coef * err / b])?;
        value_grads.add_scaled(&g, 1.0);
    }

    // Entropy bonus: d(-β H)/d log σ_k = -β.
    for g in policy_grads.log_std.iter_mut() {
        *g -= config.beta;
    }

    let entropy = agent.policy.entropy();
    {
        let mut slices = policy_grads.slices_mut();
        clip_grad_norm(&mut slices, config.max_grad_norm);
    }
    {
        let mut slices = value_grads.param_slices_mut();
        clip_grad_norm(&mut slices, config.max_grad_norm);
    }
    agent
        .policy_optimizer
        .step(&mut agent.policy.param_slices_mut(), &policy_grads.slices(), lr)?;
    agent
        .value_optimizer
        .step(&mut agent.value.param_slices_mut(), &value_grads.param_slices(), lr)?;

    Ok(UpdateStats {
        policy_loss: -surrogate_sum / b,
        value_loss: sq_err_sum / b,
        entropy,
        minibatches: 1,
    })
}
