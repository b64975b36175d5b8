//! Partially observable multi-agent environments behind one stepping
//! interface.

mod navigation;
mod predator_prey;
mod shapes;
mod traffic_junction;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use navigation::{Navigation, NavigationParams, NavigationState};
pub use predator_prey::{PredatorPrey, PredatorPreyParams, PredatorPreyState};
pub use shapes::{Shapes, ShapesParams, ShapesState, SHAPE_COLOURS};
pub use traffic_junction::{Car, ACTION_BRAKE, ACTION_GAS, TrafficJunction, TrafficJunctionParams, TrafficJunctionState};

/// Static description of an environment instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub episode_cap: usize,
    pub gamma: f64,
    pub action_arity: usize,
    pub obs_dim: usize,
    pub jointly_fully_observable: bool,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::config("environment needs at least one agent"));
        }
        if self.episode_cap == 0 {
            return Err(Error::config("episode cap must be positive"));
        }
        if self.action_arity < 2 {
            return Err(Error::config("action arity must be at least 2"));
        }
        if self.obs_dim == 0 {
            return Err(Error::config("observation dimension must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// Outcome of one joint step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Agent `i` finished during this step (terminal for its return).
    pub dones: Vec<bool>,
    pub episode_done: bool,
}

/// Full environment state, for inspection and tests.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvState {
    PredatorPrey(PredatorPreyState),
    TrafficJunction(TrafficJunctionState),
    Navigation(NavigationState),
    Shapes(ShapesState),
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a fresh episode; deterministic in `seed`.
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>>;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    fn encode_observation(&self, agent: usize) -> Result<Vec<f64>>;

    /// Agents whose action takes effect at the next step.
    fn acting(&self) -> Vec<bool>;

    /// Steps taken in the current episode.
    fn t(&self) -> usize;

    fn is_done(&self) -> bool;

    /// Episode-level success so far (definition is environment specific).
    fn success(&self) -> bool;

    fn state(&self) -> EnvState;

    fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.spec().n_agents)
            .map(|i| self.encode_observation(i).expect("index in range"))
            .collect()
    }
}

pub(crate) fn check_step(spec: &EnvSpec, done: bool, actions: &[usize]) -> Result<()> {
    if done {
        return Err(Error::contract("step called after the episode finished"));
    }
    if actions.len() != spec.n_agents {
        return Err(Error::contract(format!(
            "expected {} actions, got {}",
            spec.n_agents,
            actions.len()
        )));
    }
    if let Some((i, a)) = actions.iter().enumerate().find(|(_, &a)| a >= spec.action_arity) {
        return Err(Error::contract(format!(
            "agent {i} chose action {a}, arity is {}",
            spec.action_arity
        )));
    }
    Ok(())
}

pub(crate) fn check_agent(spec: &EnvSpec, agent: usize) -> Result<()> {
    if agent >= spec.n_agents {
        return Err(Error::contract(format!(
            "agent index {agent} out of range for {} agents",
            spec.n_agents
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    PredatorPrey,
    TrafficJunction,
    Navigation,
    Shapes,
}

impl EnvName {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::PredatorPrey => "predator_prey",
            EnvName::TrafficJunction => "traffic_junction",
            EnvName::Navigation => "navigation",
            EnvName::Shapes => "shapes",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    #[default]
    Easy,
    Medium,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
        }
    }
}

/// `[environment]` section of the run config. Unset fields take the
/// difficulty tier's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: EnvName,
    #[serde(default)]
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vision: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_penalty: Option<f64>,
    /// Set from the training config, not read from the file.
    #[serde(skip, default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    0.99
}

impl EnvConfig {
    pub fn new(name: EnvName, difficulty: Difficulty) -> Self {
        EnvConfig {
            name,
            difficulty,
            n_agents: None,
            grid_size: None,
            vision: None,
            episode_cap: None,
            spawn_prob: None,
            step_penalty: None,
            gamma: default_gamma(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self.name {
            EnvName::PredatorPrey => Box::new(PredatorPrey::new(PredatorPreyParams::from_config(self))?),
            EnvName::TrafficJunction => {
                Box::new(TrafficJunction::new(TrafficJunctionParams::from_config(self))?)
            }
            EnvName::Navigation => Box::new(Navigation::new(NavigationParams::from_config(self))?),
            EnvName::Shapes => Box::new(Shapes::new(ShapesParams::from_config(self))?),
        })
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        Ok(self.build()?.spec().clone())
    }
}

/// Episode statistics under the uniform-random joint policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutStats {
    /// Mean over episodes of the agent-averaged undiscounted return.
    pub mean_return: f64,
    pub mean_length: f64,
    pub success_rate: f64,
}

pub fn random_rollout_return(config: &EnvConfig, seed: u64, episodes: usize) -> Result<RolloutStats> {
    if episodes == 0 {
        return Err(Error::config("need at least one episode"));
    }
    let mut env = config.build()?;
    let n = env.spec().n_agents;
    let arity = env.spec().action_arity;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ret, mut len, mut wins) = (0.0, 0.0, 0.0);
    for _ in 0..episodes {
        env.reset(rng.random());
        let mut total = 0.0;
        while !env.is_done() {
            let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..arity)).collect();
            let res = env.step(&actions)?;
            total += res.rewards.iter().sum::<f64>();
        }
        ret += total / n as f64;
        len += env.t() as f64;
        wins += if env.success() { 1.0 } else { 0.0 };
    }
    let e = episodes as f64;
    Ok(RolloutStats {
        mean_return: ret / e,
        mean_length: len / e,
        success_rate: wins / e,
    })
}

/// Grid moves shared by the grid worlds: up, down, left, right, stay.
pub(crate) const GRID_MOVES: [(i64, i64); 5] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

pub(crate) fn grid_move(pos: (usize, usize), action: usize, size: usize) -> (usize, usize) {
    let (dr, dc) = GRID_MOVES[action];
    let r = (pos.0 as i64 + dr).clamp(0, size as i64 - 1) as usize;
    let c = (pos.1 as i64 + dc).clamp(0, size as i64 - 1) as usize;
    (r, c)
}
