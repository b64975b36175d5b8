use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_agent, check_step, EnvConfig, EnvSpec, EnvState, Environment, StepResult};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NavigationParams {
    pub n_agents: usize,
    pub episode_cap: usize,
    pub dt: f64,
    pub accel: f64,
    /// Velocity retained per step.
    pub drag: f64,
    pub collision_radius: f64,
    pub collision_penalty: f64,
    pub goal_radius: f64,
    pub gamma: f64,
}

impl Default for NavigationParams {
    fn default() -> Self {
        NavigationParams {
            n_agents: 4,
            episode_cap: 100,
            dt: 0.1,
            accel: 1.0,
            drag: 0.95,
            collision_radius: 0.1,
            collision_penalty: 1.0,
            goal_radius: 0.1,
            gamma: 0.99,
        }
    }
}

impl NavigationParams {
    pub fn from_config(cfg: &EnvConfig) -> Self {
        let base = Self::default();
        NavigationParams {
            n_agents: cfg.n_agents.unwrap_or(base.n_agents),
            episode_cap: cfg.episode_cap.unwrap_or(base.episode_cap),
            gamma: cfg.gamma,
            ..base
        }
    }
}

/// Action `0` is a no-op; `1..=8` accelerate towards the eight compass
/// directions (diagonals normalised).
fn direction(action: usize) -> [f64; 2] {
    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;
    match action {
        1 => [0.0, 1.0],
        2 => [S, S],
        3 => [1.0, 0.0],
        4 => [S, -S],
        5 => [0.0, -1.0],
        6 => [-S, -S],
        7 => [-1.0, 0.0],
        8 => [-S, S],
        _ => [0.0, 0.0],
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NavigationState {
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub goals: Vec<[f64; 2]>,
    pub arrived: Vec<bool>,
    pub t: usize,
    pub collisions: usize,
}

/// Point masses in `[-1, 1]²` accelerating towards individual goals while
/// unable to see each other.
pub struct Navigation {
    params: NavigationParams,
    spec: EnvSpec,
    state: NavigationState,
    done: bool,
}

impl Navigation {
    pub fn new(params: NavigationParams) -> Result<Self> {
        if params.n_agents == 0 {
            return Err(Error::config("navigation needs at least one agent"));
        }
        if !(0.0..=1.0).contains(&params.drag) || params.dt <= 0.0 {
            return Err(Error::config("navigation drag must lie in [0, 1] and dt be positive"));
        }
        let spec = EnvSpec {
            n_agents: params.n_agents,
            episode_cap: params.episode_cap,
            gamma: params.gamma,
            action_arity: 9,
            obs_dim: 6,
            jointly_fully_observable: false,
        };
        spec.validate()?;
        let n = params.n_agents;
        Ok(Navigation {
            state: NavigationState {
                positions: vec![[0.0; 2]; n],
                velocities: vec![[0.0; 2]; n],
                goals: vec![[0.0; 2]; n],
                arrived: vec![false; n],
                t: 0,
                collisions: 0,
            },
            params,
            spec,
            done: true,
        })
    }

    pub fn params(&self) -> &NavigationParams {
        &self.params
    }

    pub fn set_state(&mut self, state: NavigationState) {
        self.done = state.arrived.iter().all(|&a| a) || state.t >= self.spec.episode_cap;
        self.state = state;
    }
}

impl Environment for Navigation {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.params.n_agents;
        let min_sep = 2.0 * self.params.collision_radius;
        let sample = |rng: &mut ChaCha8Rng| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let mut positions: Vec<[f64; 2]> = Vec::with_capacity(n);
        let mut tries = 0;
        while positions.len() < n {
            let p = sample(&mut rng);
            tries += 1;
            if tries > 10_000 || positions.iter().all(|&q| dist(p, q) > min_sep) {
                positions.push(p);
            }
        }
        let goals = (0..n)
            .map(|i| loop {
                let g = sample(&mut rng);
                if dist(g, positions[i]) > self.params.goal_radius {
                    break g;
                }
            })
            .collect();
        self.state = NavigationState {
            positions,
            velocities: vec![[0.0; 2]; n],
            goals,
            arrived: vec![false; n],
            t: 0,
            collisions: 0,
        };
        self.done = false;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_step(&self.spec, self.done, actions)?;
        let p = &self.params;
        let n = self.spec.n_agents;
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        let s = &mut self.state;
        let frozen = s.arrived.clone();
        for i in 0..n {
            if s.arrived[i] {
                continue;
            }
            let before = dist(s.positions[i], s.goals[i]);
            let dir = direction(actions[i]);
            for k in 0..2 {
                s.velocities[i][k] = p.drag * (s.velocities[i][k] + p.accel * dir[k] * p.dt);
                s.positions[i][k] += s.velocities[i][k] * p.dt;
                if s.positions[i][k].abs() > 1.0 {
                    s.positions[i][k] = s.positions[i][k].clamp(-1.0, 1.0);
                    s.velocities[i][k] = 0.0;
                }
            }
            let after = dist(s.positions[i], s.goals[i]);
            rewards[i] = before - after;
            if after <= p.goal_radius {
                s.arrived[i] = true;
                dones[i] = true;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if frozen[i] || frozen[j] {
                    continue;
                }
                if dist(s.positions[i], s.positions[j]) < p.collision_radius {
                    rewards[i] -= p.collision_penalty;
                    rewards[j] -= p.collision_penalty;
                    s.collisions += 1;
                }
            }
        }
        s.t += 1;
        self.done = s.arrived.iter().all(|&a| a) || s.t >= self.spec.episode_cap;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            dones,
            episode_done: self.done,
        })
    }

    fn encode_observation(&self, agent: usize) -> Result<Vec<f64>> {
        check_agent(&self.spec, agent)?;
        let s = &self.state;
        let (p, v, g) = (s.positions[agent], s.velocities[agent], s.goals[agent]);
        Ok(vec![p[0], p[1], v[0], v[1], g[0] - p[0], g[1] - p[1]])
    }

    fn acting(&self) -> Vec<bool> {
        self.state.arrived.iter().map(|&a| !a).collect()
    }

    fn t(&self) -> usize {
        self.state.t
    }

    fn is_done(&self) -> bool {
        self.done
    }

    /// Every agent reached its goal.
    fn success(&self) -> bool {
        self.state.arrived.iter().all(|&a| a)
    }

    fn state(&self) -> EnvState {
        EnvState::Navigation(self.state.clone())
    }
}
