//! The agent architecture: observation encoder, message encoder, message
//! history cache, temporal attention aggregation, policy head and a
//! centralised critic.

mod cache;
mod model;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{max_message_dim, BandwidthBudget};
use crate::baselines::AggregatorKind;
use crate::env::EnvSpec;
use crate::error::{Error, Result};

pub use cache::{Message, MessageCache};
pub use model::{EpisodeMemory, EpisodeVars, ModelShapes, SlimModel, StepOutput};

/// `[model]` section of the run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub aggregator: AggregatorKind,
    pub cache: bool,
    pub share_parameters: bool,
    /// Per-agent budget in scalars per step.
    pub beta: f64,
    pub graph_density: f64,
    pub rounds: u32,
    /// Defaults to the largest dimension the budget allows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message_dim: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_size: 128,
            heads: 4,
            encoder_layers: 2,
            aggregator: AggregatorKind::Slim,
            cache: true,
            share_parameters: true,
            beta: 64.0,
            graph_density: 1.0,
            rounds: 1,
            message_dim: None,
        }
    }
}

impl ModelConfig {
    /// Resolves the message dimension and checks `sigma * k * d <= beta`.
    pub fn budget(&self) -> Result<BandwidthBudget> {
        let dim = match self.message_dim {
            Some(d) => d,
            None => max_message_dim(self.beta, self.graph_density, self.rounds)?.ok_or_else(|| {
                Error::config(format!(
                    "bandwidth constraint violated: no message dimension d >= 1 satisfies sigma x k x d <= beta \
                     (sigma = {}, k = {}, beta = {})",
                    self.graph_density, self.rounds, self.beta
                ))
            })?,
        };
        let budget = BandwidthBudget::new(self.graph_density, self.rounds, dim, self.beta);
        budget.require_feasible()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<BandwidthBudget> {
        let budget = self.budget()?;
        if self.hidden_size == 0 || self.encoder_layers == 0 {
            return Err(Error::config("hidden_size and encoder_layers must be positive"));
        }
        if self.heads == 0 || self.hidden_size % self.heads != 0 {
            return Err(Error::config(format!(
                "hidden_size {} not divisible by {} heads",
                self.hidden_size, self.heads
            )));
        }
        if self.aggregator.communicates() && (self.graph_density != 1.0 || self.rounds != 1) {
            return Err(Error::config(
                "agents broadcast once per step: only graph_density = 1 and rounds = 1 are supported",
            ));
        }
        Ok(budget)
    }
}

/// Environment-derived sizes the model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub obs_dim: usize,
    pub n_agents: usize,
    pub action_arity: usize,
    pub episode_cap: usize,
}

impl From<&EnvSpec> for ModelDims {
    fn from(spec: &EnvSpec) -> Self {
        ModelDims {
            obs_dim: spec.obs_dim,
            n_agents: spec.n_agents,
            action_arity: spec.action_arity,
            episode_cap: spec.episode_cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_dim_follows_beta() {
        for (beta, d) in [(1.0, 1), (4.0, 4), (64.0, 64)] {
            let cfg = ModelConfig { beta, ..ModelConfig::default() };
            assert_eq!(cfg.validate().unwrap().dim, d);
        }
    }

    #[test]
    fn two_rounds_at_same_dim_is_refused_by_the_budget() {
        let cfg = ModelConfig {
            beta: 4.0,
            rounds: 2,
            message_dim: Some(4),
            ..ModelConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("bandwidth constraint violated"), "{err}");
    }

    #[test]
    fn feasible_sparse_multi_round_is_unsupported() {
        let cfg = ModelConfig {
            beta: 4.0,
            rounds: 2,
            graph_density: 0.5,
            ..ModelConfig::default()
        };
        assert!(cfg.budget().is_ok());
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
