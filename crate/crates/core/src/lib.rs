//! Voxel wind-tunnel shape optimisation.
//!
//! Vehicle bodies are described by heightmaps, voxelised into solid columns,
//! and measured in a particle-burst wind tunnel. A PPO agent then edits column
//! heights to raise the kinetic energy of the passing air and cut drag and
//! collisions.

pub mod env;
pub mod error;
pub mod nn;
pub mod ppo;
pub mod report;
pub mod voxel;
pub mod windtunnel;

pub use error::{Error, Result};
