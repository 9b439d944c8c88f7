use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ppo_update, Agent, PpoConfig, Record, RolloutBuffer, UpdateStats};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, CHECKPOINT_FORMAT_VERSION};

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// `[drag_force, kinetic_energy, collision_count, heightmap_sum]` after the step.
    pub metrics: [f64; 4],
}

/// The interface the trainer drives.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<Transition>;
}

pub const TRACE_HEADER: &str =
    "step,reward,drag_force,kinetic_energy,collision_count,heightmap_sum,policy_loss,value_loss,entropy";

/// One logged environment step. Loss columns hold the most recent update's
/// diagnostics and are zero until the first update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub reward: f64,
    pub metrics: [f64; 4],
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

impl TraceRow {
    pub fn to_csv_line(&self) -> String {
        let [df, ke, c, hs] = self.metrics;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step, self.reward, df, ke, c, hs, self.policy_loss, self.value_loss, self.entropy
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 9 {
            return Err(Error::parse(
                0,
                format!("trace row needs 9 columns, found {}", cols.len()),
            ));
        }
        let f = |i: usize| -> Result<f64> {
            cols[i]
                .parse()
                .map_err(|_| Error::parse(0, format!("invalid number `{}` in column {i}", cols[i])))
        };
        Ok(Self {
            step: cols[0].parse().map_err(|_| Error::parse(0, "invalid step"))?,
            reward: f(1)?,
            metrics: [f(2)?, f(3)?, f(4)?, f(5)?],
            policy_loss: f(6)?,
            value_loss: f(7)?,
            entropy: f(8)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub checkpoint: Checkpoint,
    pub trace: Vec<TraceRow>,
    pub updates: Vec<UpdateStats>,
}

fn checkpoint(agent: &Agent, config: &PpoConfig, env_steps: usize) -> Checkpoint {
    Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: serde_json::to_value(config).expect("config is serialisable"),
        env_steps,
        policy: agent.policy.clone(),
        value: agent.value.clone(),
        policy_optimizer: agent.policy_optimizer.clone(),
        value_optimizer: agent.value_optimizer.clone(),
    }
}

/// Trains a fresh agent on `env` for `config.max_training_steps` environment steps.
///
/// Experience is collected in segments of at most `time_horizon` steps until
/// the buffer holds `buffer_size` records, then one PPO update runs and the
/// buffer is emptied. `on_checkpoint` sees the initial agent and the agent
/// after every update.
pub fn train<E: Environment>(
    env: &mut E,
    config: &PpoConfig,
    mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agent = Agent::new(env.observation_dim(), env.action_dim(), config, &mut rng);
    let mut latest = checkpoint(&agent, config, 0);
    on_checkpoint(&latest)?;

    let mut trace = Vec::new();
    let mut updates = Vec::new();
    let mut last_stats = UpdateStats::default();
    let mut buffer = RolloutBuffer::new(config.buffer_size);
    let mut steps = 0;
    let env_err = |step: usize| {
        move |e: Error| Error::Env {
            step,
            source: Box::new(e),
        }
    };

    if config.max_training_steps == 0 {
        return Ok(TrainOutcome {
            agent,
            checkpoint: latest,
            trace,
            updates,
        });
    }

    let mut observation = env.reset().map_err(env_err(0))?;
    while steps < config.max_training_steps {
        let mut last_done = false;
        for _ in 0..config.time_horizon {
            if buffer.is_full() || steps >= config.max_training_steps {
                break;
            }
            let (action, log_prob, _) = agent.policy.sample(&observation, &mut rng)?;
            let value = agent.value_of(&observation)?;
            let tr = env.step(&action).map_err(env_err(steps))?;
            let reward = tr.reward * config.reward_strength;
            buffer.push(Record {
                observation: std::mem::take(&mut observation),
                action,
                log_prob,
                reward,
                value,
                done: tr.done,
            })?;
            steps += 1;
            if steps % config.summary_frequency == 0 {
                trace.push(TraceRow {
                    step: steps,
                    reward,
                    metrics: tr.metrics,
                    policy_loss: last_stats.policy_loss,
                    value_loss: last_stats.value_loss,
                    entropy: last_stats.entropy,
                });
            }
            last_done = tr.done;
            observation = if tr.done {
                env.reset().map_err(env_err(steps))?
            } else {
                tr.observation
            };
            if last_done {
                break;
            }
        }
        let bootstrap = if last_done { 0.0 } else { agent.value_of(&observation)? };
        buffer.finish_segment(bootstrap, config.gamma, config.lambda)?;

        if buffer.is_full() {
            let progress = steps as f64 / config.max_training_steps as f64;
            last_stats = ppo_update(&buffer, &mut agent, config, progress, &mut rng)?;
            updates.push(last_stats);
            buffer.clear();
            latest = checkpoint(&agent, config, steps);
            on_checkpoint(&latest)?;
        }
    }

    // Trailing experience that did not fill the buffer is not learned from,
    // but the returned checkpoint still records how many steps were taken.
    latest.env_steps = steps;
    Ok(TrainOutcome {
        agent,
        checkpoint: latest,
        trace,
        updates,
    })
}

/// Plays one episode from reset using the policy mean as the action.
pub fn evaluate_greedy<E: Environment>(env: &mut E, agent: &Agent, max_steps: usize) -> Result<Vec<Transition>> {
    let mut observation = env.reset().map_err(|e| Error::Env {
        step: 0,
        source: Box::new(e),
    })?;
    let mut out = Vec::new();
    for step in 0..max_steps {
        let action = agent.policy.mean.predict(&observation)?;
        let tr = env.step(&action).map_err(|e| Error::Env {
            step,
            source: Box::new(e),
        })?;
        observation = tr.observation.clone();
        let done = tr.done;
        out.push(tr);
        if done {
            break;
        }
    }
    Ok(out)
}
