use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_agent, check_step, grid_move, Difficulty, EnvConfig, EnvSpec, EnvState, Environment, StepResult};
use crate::error::{Error, Result};

/// Per-cell feature channels of the local window.
const CHANNELS: usize = 3;
const CH_OUTSIDE: usize = 0;
const CH_PREY: usize = 1;
const CH_PREDATOR: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct PredatorPreyParams {
    pub grid_size: usize,
    pub n_predators: usize,
    pub vision: usize,
    pub episode_cap: usize,
    pub step_penalty: f64,
    pub gamma: f64,
}

impl PredatorPreyParams {
    pub fn easy() -> Self {
        PredatorPreyParams {
            grid_size: 5,
            n_predators: 3,
            vision: 1,
            episode_cap: 40,
            step_penalty: 0.05,
            gamma: 0.99,
        }
    }

    pub fn medium() -> Self {
        PredatorPreyParams {
            grid_size: 10,
            n_predators: 5,
            episode_cap: 80,
            ..Self::easy()
        }
    }

    pub fn from_config(cfg: &EnvConfig) -> Self {
        let base = match cfg.difficulty {
            Difficulty::Easy => Self::easy(),
            Difficulty::Medium => Self::medium(),
        };
        PredatorPreyParams {
            grid_size: cfg.grid_size.unwrap_or(base.grid_size),
            n_predators: cfg.n_agents.unwrap_or(base.n_predators),
            vision: cfg.vision.unwrap_or(base.vision),
            episode_cap: cfg.episode_cap.unwrap_or(base.episode_cap),
            step_penalty: cfg.step_penalty.unwrap_or(base.step_penalty),
            gamma: cfg.gamma,
        }
    }

    pub fn window(&self) -> usize {
        2 * self.vision + 1
    }

    pub fn obs_dim(&self) -> usize {
        self.window() * self.window() * CHANNELS + 2 * self.grid_size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredatorPreyState {
    pub prey: (usize, usize),
    pub predators: Vec<(usize, usize)>,
    pub reached: Vec<bool>,
    pub t: usize,
}

/// Grid world where predators with a small vision window search for a
/// stationary prey. Every predator pays `step_penalty` per step until it
/// stands on the prey, after which it is frozen with reward 0.
pub struct PredatorPrey {
    params: PredatorPreyParams,
    spec: EnvSpec,
    state: PredatorPreyState,
    done: bool,
}

impl PredatorPrey {
    pub fn new(params: PredatorPreyParams) -> Result<Self> {
        let cells = params.grid_size * params.grid_size;
        if params.grid_size == 0 || params.n_predators == 0 {
            return Err(Error::config("predator-prey needs a grid and at least one predator"));
        }
        if params.n_predators + 1 > cells {
            return Err(Error::config(format!(
                "{} predators and a prey do not fit on a {}x{} grid",
                params.n_predators, params.grid_size, params.grid_size
            )));
        }
        if params.step_penalty < 0.0 {
            return Err(Error::config("step penalty is a magnitude and must be non-negative"));
        }
        let spec = EnvSpec {
            n_agents: params.n_predators,
            episode_cap: params.episode_cap,
            gamma: params.gamma,
            action_arity: 5,
            obs_dim: params.obs_dim(),
            jointly_fully_observable: false,
        };
        spec.validate()?;
        let state = PredatorPreyState {
            prey: (0, 0),
            predators: vec![(0, 0); params.n_predators],
            reached: vec![false; params.n_predators],
            t: 0,
        };
        Ok(PredatorPrey {
            params,
            spec,
            state,
            done: true,
        })
    }

    pub fn params(&self) -> &PredatorPreyParams {
        &self.params
    }

    /// Places prey and predators explicitly; used to script trajectories.
    pub fn reset_to(&mut self, prey: (usize, usize), predators: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
        let g = self.params.grid_size;
        if predators.len() != self.params.n_predators
            || predators.iter().chain([&prey]).any(|&(r, c)| r >= g || c >= g)
        {
            return Err(Error::config("scripted positions do not fit the grid"));
        }
        self.state = PredatorPreyState {
            prey,
            predators: predators.to_vec(),
            reached: predators.iter().map(|&p| p == prey).collect(),
            t: 0,
        };
        self.done = self.state.reached.iter().all(|&r| r);
        Ok(self.observations())
    }
}

impl Environment for PredatorPrey {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = self.params.grid_size;
        let prey = (rng.random_range(0..g), rng.random_range(0..g));
        let predators = (0..self.params.n_predators)
            .map(|_| loop {
                let p = (rng.random_range(0..g), rng.random_range(0..g));
                if p != prey {
                    break p;
                }
            })
            .collect();
        self.state = PredatorPreyState {
            prey,
            predators,
            reached: vec![false; self.params.n_predators],
            t: 0,
        };
        self.done = false;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_step(&self.spec, self.done, actions)?;
        let n = self.spec.n_agents;
        let g = self.params.grid_size;
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        for i in 0..n {
            if self.state.reached[i] {
                continue;
            }
            self.state.predators[i] = grid_move(self.state.predators[i], actions[i], g);
            if self.state.predators[i] == self.state.prey {
                self.state.reached[i] = true;
                dones[i] = true;
            } else {
                rewards[i] = -self.params.step_penalty;
            }
        }
        self.state.t += 1;
        self.done = self.state.reached.iter().all(|&r| r) || self.state.t >= self.spec.episode_cap;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            dones,
            episode_done: self.done,
        })
    }

    fn encode_observation(&self, agent: usize) -> Result<Vec<f64>> {
        check_agent(&self.spec, agent)?;
        let g = self.params.grid_size as i64;
        let v = self.params.vision as i64;
        let w = self.params.window();
        let mut obs = vec![0.0; self.spec.obs_dim];
        let (r0, c0) = self.state.predators[agent];
        for dr in -v..=v {
            for dc in -v..=v {
                let cell = ((dr + v) as usize * w + (dc + v) as usize) * CHANNELS;
                let (r, c) = (r0 as i64 + dr, c0 as i64 + dc);
                if r < 0 || c < 0 || r >= g || c >= g {
                    obs[cell + CH_OUTSIDE] = 1.0;
                    continue;
                }
                let pos = (r as usize, c as usize);
                if pos == self.state.prey {
                    obs[cell + CH_PREY] = 1.0;
                }
                if self
                    .state
                    .predators
                    .iter()
                    .enumerate()
                    .any(|(j, &p)| j != agent && p == pos)
                {
                    obs[cell + CH_PREDATOR] = 1.0;
                }
            }
        }
        let base = w * w * CHANNELS;
        obs[base + r0] = 1.0;
        obs[base + self.params.grid_size + c0] = 1.0;
        Ok(obs)
    }

    fn acting(&self) -> Vec<bool> {
        self.state.reached.iter().map(|&r| !r).collect()
    }

    fn t(&self) -> usize {
        self.state.t
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn success(&self) -> bool {
        self.state.reached.iter().all(|&r| r)
    }

    fn state(&self) -> EnvState {
        EnvState::PredatorPrey(self.state.clone())
    }
}
