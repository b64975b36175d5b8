use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_agent, check_step, Difficulty, EnvConfig, EnvSpec, EnvState, Environment, StepResult};
use crate::error::{Error, Result};

pub const ACTION_GAS: usize = 0;
pub const ACTION_BRAKE: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficJunctionParams {
    pub grid_size: usize,
    pub max_cars: usize,
    pub spawn_prob: f64,
    pub episode_cap: usize,
    /// Straight routes only when false.
    pub turns: bool,
    pub collision_penalty: f64,
    pub delay_coef: f64,
    pub gamma: f64,
}

impl TrafficJunctionParams {
    pub fn easy() -> Self {
        TrafficJunctionParams {
            grid_size: 7,
            max_cars: 5,
            spawn_prob: 0.3,
            episode_cap: 40,
            turns: false,
            collision_penalty: 10.0,
            delay_coef: 0.01,
            gamma: 0.99,
        }
    }

    pub fn medium() -> Self {
        TrafficJunctionParams {
            grid_size: 14,
            max_cars: 10,
            spawn_prob: 0.2,
            turns: true,
            ..Self::easy()
        }
    }

    pub fn from_config(cfg: &EnvConfig) -> Self {
        let base = match cfg.difficulty {
            Difficulty::Easy => Self::easy(),
            Difficulty::Medium => Self::medium(),
        };
        TrafficJunctionParams {
            grid_size: cfg.grid_size.unwrap_or(base.grid_size),
            max_cars: cfg.n_agents.unwrap_or(base.max_cars),
            spawn_prob: cfg.spawn_prob.unwrap_or(base.spawn_prob),
            episode_cap: cfg.episode_cap.unwrap_or(base.episode_cap),
            gamma: cfg.gamma,
            ..base
        }
    }
}

/// A one-way lane: fixed row (horizontal) or column (vertical) and a heading.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Lane {
    horizontal: bool,
    fixed: usize,
    forward: bool,
}

impl Lane {
    fn cell(&self, along: usize) -> (usize, usize) {
        if self.horizontal {
            (self.fixed, along)
        } else {
            (along, self.fixed)
        }
    }

    fn walk(&self, size: usize) -> Vec<usize> {
        if self.forward {
            (0..size).collect()
        } else {
            (0..size).rev().collect()
        }
    }
}

fn build_routes(size: usize, turns: bool) -> (Vec<Vec<(usize, usize)>>, Vec<usize>) {
    let (a, b) = (size / 2 - 1, size / 2);
    // entry lanes: eastbound, westbound, southbound, northbound
    let lanes = [
        Lane { horizontal: true, fixed: b, forward: true },
        Lane { horizontal: true, fixed: a, forward: false },
        Lane { horizontal: false, fixed: a, forward: true },
        Lane { horizontal: false, fixed: b, forward: false },
    ];
    let mut routes = Vec::new();
    let mut entry_of = Vec::new();
    for (e, entry) in lanes.iter().enumerate() {
        let exits: Vec<&Lane> = if turns {
            std::iter::once(entry)
                .chain(lanes.iter().filter(|l| l.horizontal != entry.horizontal))
                .collect()
        } else {
            vec![entry]
        };
        for exit in exits {
            let mut cells = Vec::new();
            if exit == entry {
                cells.extend(entry.walk(size).into_iter().map(|x| entry.cell(x)));
            } else {
                for x in entry.walk(size) {
                    cells.push(entry.cell(x));
                    if x == exit.fixed {
                        break;
                    }
                }
                let turn_at = entry.fixed;
                let rest: Vec<usize> = exit.walk(size);
                let pos = rest.iter().position(|&y| y == turn_at).expect("lanes cross");
                cells.extend(rest[pos + 1..].iter().map(|&y| exit.cell(y)));
            }
            routes.push(cells);
            entry_of.push(e);
        }
    }
    (routes, entry_of)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Car {
    pub route: usize,
    pub progress: usize,
    /// Steps since the car entered.
    pub age: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficJunctionState {
    pub slots: Vec<Option<Car>>,
    pub t: usize,
    pub collisions: usize,
}

/// Junction where blind cars either advance along their route or wait.
/// Each agent is a car slot; slots are reused once a car leaves the grid.
pub struct TrafficJunction {
    params: TrafficJunctionParams,
    spec: EnvSpec,
    routes: Vec<Vec<(usize, usize)>>,
    routes_by_entry: Vec<Vec<usize>>,
    state: TrafficJunctionState,
    rng: ChaCha8Rng,
    done: bool,
}

impl TrafficJunction {
    pub fn new(params: TrafficJunctionParams) -> Result<Self> {
        if params.grid_size < 4 {
            return Err(Error::config("traffic junction grid must be at least 4 cells wide"));
        }
        if params.max_cars == 0 {
            return Err(Error::config("traffic junction needs at least one car slot"));
        }
        if !(0.0..=1.0).contains(&params.spawn_prob) {
            return Err(Error::config("spawn probability outside [0, 1]"));
        }
        let (routes, entry_of) = build_routes(params.grid_size, params.turns);
        let mut routes_by_entry = vec![Vec::new(); 4];
        for (r, &e) in entry_of.iter().enumerate() {
            routes_by_entry[e].push(r);
        }
        let spec = EnvSpec {
            n_agents: params.max_cars,
            episode_cap: params.episode_cap,
            gamma: params.gamma,
            action_arity: 2,
            obs_dim: params.grid_size * params.grid_size + routes.len() + 1,
            jointly_fully_observable: true,
        };
        spec.validate()?;
        Ok(TrafficJunction {
            state: TrafficJunctionState {
                slots: vec![None; params.max_cars],
                t: 0,
                collisions: 0,
            },
            params,
            spec,
            routes,
            routes_by_entry,
            rng: ChaCha8Rng::seed_from_u64(0),
            done: true,
        })
    }

    pub fn params(&self) -> &TrafficJunctionParams {
        &self.params
    }

    pub fn routes(&self) -> &[Vec<(usize, usize)>] {
        &self.routes
    }

    pub fn position(&self, car: &Car) -> (usize, usize) {
        self.routes[car.route][car.progress]
    }

    /// Rebuilds the car layout from a joint observation. Inverse of the
    /// observation encoding; the spawn schedule is not recoverable.
    pub fn decode_joint_observation(&self, joint: &[Vec<f64>]) -> Result<Vec<Option<(usize, usize, usize)>>> {
        let s = self.params.grid_size;
        let cells = s * s;
        joint
            .iter()
            .map(|o| {
                if o.len() != self.spec.obs_dim {
                    return Err(Error::contract("observation width mismatch"));
                }
                if o[self.spec.obs_dim - 1] == 0.0 {
                    return Ok(None);
                }
                let cell = o[..cells].iter().position(|&x| x == 1.0).ok_or_else(|| Error::contract("no cell"))?;
                let route = o[cells..cells + self.routes.len()]
                    .iter()
                    .position(|&x| x == 1.0)
                    .ok_or_else(|| Error::contract("no route"))?;
                let pos = (cell / s, cell % s);
                let progress = self.routes[route]
                    .iter()
                    .position(|&c| c == pos)
                    .ok_or_else(|| Error::contract("cell not on route"))?;
                Ok(Some((route, progress, cell)))
            })
            .collect()
    }

    fn spawn(&mut self) {
        for entry in 0..4 {
            let u: f64 = self.rng.random();
            let choice = self.rng.random_range(0..self.routes_by_entry[entry].len());
            if u >= self.params.spawn_prob {
                continue;
            }
            let route = self.routes_by_entry[entry][choice];
            let start = self.routes[route][0];
            let blocked = self
                .state
                .slots
                .iter()
                .flatten()
                .any(|c| self.routes[c.route][c.progress] == start);
            if blocked {
                continue;
            }
            if let Some(slot) = self.state.slots.iter_mut().find(|s| s.is_none()) {
                *slot = Some(Car {
                    route,
                    progress: 0,
                    age: 0,
                });
            }
        }
    }
}

impl Environment for TrafficJunction {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = TrafficJunctionState {
            slots: vec![None; self.params.max_cars],
            t: 0,
            collisions: 0,
        };
        self.done = false;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_step(&self.spec, self.done, actions)?;
        let n = self.spec.n_agents;
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        for i in 0..n {
            let Some(car) = self.state.slots[i].as_mut() else { continue };
            car.age += 1;
            rewards[i] = -self.params.delay_coef * car.age as f64;
            if actions[i] == ACTION_GAS {
                car.progress += 1;
                if car.progress == self.routes[car.route].len() {
                    self.state.slots[i] = None;
                    dones[i] = true;
                }
            }
        }
        for i in 0..n {
            let Some(ci) = &self.state.slots[i] else { continue };
            let pi = self.position(ci);
            let crowded = (0..n).any(|j| j != i && self.state.slots[j].as_ref().is_some_and(|cj| self.position(cj) == pi));
            if crowded {
                rewards[i] -= self.params.collision_penalty;
                self.state.collisions += 1;
            }
        }
        self.spawn();
        self.state.t += 1;
        self.done = self.state.t >= self.spec.episode_cap;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            dones,
            episode_done: self.done,
        })
    }

    fn encode_observation(&self, agent: usize) -> Result<Vec<f64>> {
        check_agent(&self.spec, agent)?;
        let mut obs = vec![0.0; self.spec.obs_dim];
        if let Some(car) = &self.state.slots[agent] {
            let s = self.params.grid_size;
            let (r, c) = self.position(car);
            obs[r * s + c] = 1.0;
            obs[s * s + car.route] = 1.0;
            obs[self.spec.obs_dim - 1] = 1.0;
        }
        Ok(obs)
    }

    fn acting(&self) -> Vec<bool> {
        self.state.slots.iter().map(Option::is_some).collect()
    }

    fn t(&self) -> usize {
        self.state.t
    }

    fn is_done(&self) -> bool {
        self.done
    }

    /// An episode succeeds when no collision happened.
    fn success(&self) -> bool {
        self.state.collisions == 0
    }

    fn state(&self) -> EnvState {
        EnvState::TrafficJunction(self.state.clone())
    }
}
