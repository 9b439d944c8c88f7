use serde::{Deserialize, Serialize};

use super::{AdamState, GaussianPolicy, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Everything needed to resume or evaluate a trained agent.
///
/// Serialised as JSON; finite `f64` values survive a save/load round trip
/// bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    /// The training configuration this checkpoint was produced under.
    pub config: serde_json::Value,
    /// Environment steps taken when the checkpoint was written.
    pub env_steps: usize,
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub policy_optimizer: AdamState,
    pub value_optimizer: AdamState,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::config(
                "format_version",
                format!("unsupported checkpoint version {}", ckpt.format_version),
            ));
        }
        ckpt.policy.validate()?;
        Ok(ckpt)
    }
}
