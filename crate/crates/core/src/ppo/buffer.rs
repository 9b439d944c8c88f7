use crate::error::{Error, Result};

/// One environment transition as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub observation: Vec<f64>,
    /// The raw sampled action (before any clamping done by the environment).
    pub action: Vec<f64>,
    /// Log-probability of `action` under the policy that collected it.
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// On-policy trajectory storage. All records come from a single policy
/// snapshot and are discarded after each update.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    capacity: usize,
    records: Vec<Record>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
    /// Index of the first record whose advantages are not yet computed.
    open_from: usize,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            records: Vec::with_capacity(capacity),
            advantages: Vec::with_capacity(capacity),
            returns: Vec::with_capacity(capacity),
            open_from: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.records.len() >= self.capacity
    }

    pub fn push(&mut self, record: Record) -> Result<()> {
        if self.is_full() {
            return Err(Error::mismatch(
                format!("at most {} records", self.capacity),
                self.records.len() + 1,
            ));
        }
        self.records.push(record);
        Ok(())
    }

    /// Computes advantages and returns for the records added since the last
    /// call, bootstrapping from `bootstrap_value` after the final record.
    pub fn finish_segment(&mut self, bootstrap_value: f64, gamma: f64, lambda: f64) -> Result<()> {
        let seg = &self.records[self.open_from..];
        let rewards: Vec<f64> = seg.iter().map(|r| r.reward).collect();
        let values: Vec<f64> = seg.iter().map(|r| r.value).collect();
        let dones: Vec<bool> = seg.iter().map(|r| r.done).collect();
        let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap_value, gamma, lambda)?;
        self.advantages.extend(adv);
        self.returns.extend(ret);
        self.open_from = self.records.len();
        Ok(())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Advantages for the finished part of the buffer.
    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    /// Replaces the contents; used to build buffers directly in tests and tools.
    pub fn from_parts(records: Vec<Record>, advantages: Vec<f64>, returns: Vec<f64>) -> Result<Self> {
        if advantages.len() != records.len() || returns.len() != records.len() {
            return Err(Error::mismatch(
                records.len(),
                format!("{} advantages, {} returns", advantages.len(), returns.len()),
            ));
        }
        Ok(Self {
            capacity: records.len(),
            open_from: records.len(),
            records,
            advantages,
            returns,
        })
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.advantages.clear();
        self.returns.clear();
        self.open_from = 0;
    }
}

/// Generalised advantage estimation over one trajectory segment.
///
/// `δ_t = r_t + γ V_{t+1} (1 - done_t) - V_t` and
/// `Â_t = δ_t + γ λ (1 - done_t) Â_{t+1}`, with `V_T = bootstrap`.
/// Returns `(advantages, advantages + values)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::mismatch(
            format!("{n} values and dones"),
            format!("{} values, {} dones", values.len(), dones.len()),
        ));
    }
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}
