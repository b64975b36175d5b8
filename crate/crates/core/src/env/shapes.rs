use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_agent, check_step, grid_move, EnvConfig, EnvSpec, EnvState, Environment, StepResult};
use crate::error::{Error, Result};

pub const SHAPE_COLOURS: usize = 4;
const SHAPE_KINDS: usize = 2;
// outside, colour one-hot, shape one-hot
const CHANNELS: usize = 1 + SHAPE_COLOURS + SHAPE_KINDS;

#[derive(Clone, Debug, PartialEq)]
pub struct ShapesParams {
    pub image_size: usize,
    pub n_agents: usize,
    pub n_shapes: usize,
    /// Half-width of the observed patch (2 gives 5x5).
    pub patch_radius: usize,
    pub episode_cap: usize,
    pub step_penalty: f64,
    pub gamma: f64,
}

impl Default for ShapesParams {
    fn default() -> Self {
        ShapesParams {
            image_size: 16,
            n_agents: 3,
            n_shapes: 8,
            patch_radius: 2,
            episode_cap: 50,
            step_penalty: 0.01,
            gamma: 0.99,
        }
    }
}

impl ShapesParams {
    pub fn from_config(cfg: &EnvConfig) -> Self {
        let base = Self::default();
        ShapesParams {
            image_size: cfg.grid_size.unwrap_or(base.image_size),
            n_agents: cfg.n_agents.unwrap_or(base.n_agents),
            episode_cap: cfg.episode_cap.unwrap_or(base.episode_cap),
            patch_radius: cfg.vision.unwrap_or(base.patch_radius),
            step_penalty: cfg.step_penalty.unwrap_or(base.step_penalty),
            gamma: cfg.gamma,
            ..base
        }
    }

    fn patch(&self) -> usize {
        2 * self.patch_radius + 1
    }

    pub fn obs_dim(&self) -> usize {
        self.patch() * self.patch() * CHANNELS + 2 * self.image_size + SHAPE_COLOURS
    }
}

/// A painted cell: `(colour, shape)`.
pub type Pixel = Option<(usize, usize)>;

#[derive(Clone, Debug, PartialEq)]
pub struct ShapesState {
    pub image: Vec<Pixel>,
    pub positions: Vec<(usize, usize)>,
    pub targets: Vec<usize>,
    pub found: Vec<bool>,
    pub t: usize,
}

/// Agents roam an image of coloured shapes, each looking for its own
/// target colour through a small patch. Reward is `-step_penalty` per step
/// until the agent stands on its colour, 0 afterwards.
pub struct Shapes {
    params: ShapesParams,
    spec: EnvSpec,
    state: ShapesState,
    done: bool,
}

impl Shapes {
    pub fn new(params: ShapesParams) -> Result<Self> {
        if params.image_size < 3 || params.n_agents == 0 || params.n_shapes == 0 {
            return Err(Error::config("shapes needs an image, agents and at least one shape"));
        }
        let spec = EnvSpec {
            n_agents: params.n_agents,
            episode_cap: params.episode_cap,
            gamma: params.gamma,
            action_arity: 5,
            obs_dim: params.obs_dim(),
            jointly_fully_observable: false,
        };
        spec.validate()?;
        let s = params.image_size;
        Ok(Shapes {
            state: ShapesState {
                image: vec![None; s * s],
                positions: vec![(0, 0); params.n_agents],
                targets: vec![0; params.n_agents],
                found: vec![false; params.n_agents],
                t: 0,
            },
            params,
            spec,
            done: true,
        })
    }

    pub fn pixel(&self, pos: (usize, usize)) -> Pixel {
        self.state.image[pos.0 * self.params.image_size + pos.1]
    }

    fn on_target(&self, i: usize) -> bool {
        self.pixel(self.state.positions[i]).is_some_and(|(c, _)| c == self.state.targets[i])
    }

    /// Replaces the state wholesale; `found` is recomputed.
    pub fn set_state(&mut self, mut state: ShapesState) {
        self.state = state.clone();
        state.found = (0..self.params.n_agents).map(|i| self.on_target(i)).collect();
        self.done = state.found.iter().all(|&f| f);
        self.state = state;
    }

    fn paint(&mut self, rng: &mut ChaCha8Rng) {
        let s = self.params.image_size;
        self.state.image = vec![None; s * s];
        for _ in 0..self.params.n_shapes {
            let colour = rng.random_range(0..SHAPE_COLOURS);
            let kind = rng.random_range(0..SHAPE_KINDS);
            let (r0, c0) = (rng.random_range(1..s - 1), rng.random_range(1..s - 1));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    // kind 0: filled square, kind 1: plus sign
                    if kind == 1 && dr != 0 && dc != 0 {
                        continue;
                    }
                    let (r, c) = ((r0 as i64 + dr) as usize, (c0 as i64 + dc) as usize);
                    self.state.image[r * s + c] = Some((colour, kind));
                }
            }
        }
    }
}

impl Environment for Shapes {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.params.image_size;
        let n = self.params.n_agents;
        self.paint(&mut rng);
        let mut present: Vec<usize> = self.state.image.iter().flatten().map(|&(c, _)| c).collect();
        present.sort_unstable();
        present.dedup();
        // Resample placements until at least one agent still has to search,
        // so no episode is over before it starts.
        loop {
            self.state.targets = (0..n).map(|_| present[rng.random_range(0..present.len())]).collect();
            self.state.positions = (0..n).map(|_| (rng.random_range(0..s), rng.random_range(0..s))).collect();
            self.state.found = (0..n).map(|i| self.on_target(i)).collect();
            if !self.state.found.iter().all(|&f| f) {
                break;
            }
        }
        self.state.t = 0;
        self.done = false;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_step(&self.spec, self.done, actions)?;
        let n = self.spec.n_agents;
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        for i in 0..n {
            if self.state.found[i] {
                continue;
            }
            self.state.positions[i] = grid_move(self.state.positions[i], actions[i], self.params.image_size);
            if self.on_target(i) {
                self.state.found[i] = true;
                dones[i] = true;
            } else {
                rewards[i] = -self.params.step_penalty;
            }
        }
        self.state.t += 1;
        self.done = self.state.found.iter().all(|&f| f) || self.state.t >= self.spec.episode_cap;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            dones,
            episode_done: self.done,
        })
    }

    fn encode_observation(&self, agent: usize) -> Result<Vec<f64>> {
        check_agent(&self.spec, agent)?;
        let s = self.params.image_size as i64;
        let rad = self.params.patch_radius as i64;
        let w = self.params.patch();
        let mut obs = vec![0.0; self.spec.obs_dim];
        let (r0, c0) = self.state.positions[agent];
        for dr in -rad..=rad {
            for dc in -rad..=rad {
                let cell = ((dr + rad) as usize * w + (dc + rad) as usize) * CHANNELS;
                let (r, c) = (r0 as i64 + dr, c0 as i64 + dc);
                if r < 0 || c < 0 || r >= s || c >= s {
                    obs[cell] = 1.0;
                    continue;
                }
                if let Some((colour, kind)) = self.pixel((r as usize, c as usize)) {
                    obs[cell + 1 + colour] = 1.0;
                    obs[cell + 1 + SHAPE_COLOURS + kind] = 1.0;
                }
            }
        }
        let base = w * w * CHANNELS;
        obs[base + r0] = 1.0;
        obs[base + self.params.image_size + c0] = 1.0;
        obs[base + 2 * self.params.image_size + self.state.targets[agent]] = 1.0;
        Ok(obs)
    }

    fn acting(&self) -> Vec<bool> {
        self.state.found.iter().map(|&f| !f).collect()
    }

    fn t(&self) -> usize {
        self.state.t
    }

    fn is_done(&self) -> bool {
        self.done
    }

    /// Every agent found its colour.
    fn success(&self) -> bool {
        self.state.found.iter().all(|&f| f)
    }

    fn state(&self) -> EnvState {
        EnvState::Shapes(self.state.clone())
    }
}
