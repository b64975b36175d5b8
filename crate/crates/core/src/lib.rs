//! Bandwidth-constrained multi-agent reinforcement learning with a
//! decoupled communication pathway, a message-history cache and temporal
//! attention, trained with per-agent PPO and a centralised critic.

pub mod bandwidth;
pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod slim;
pub mod trainer;

pub use error::{Error, Result};
