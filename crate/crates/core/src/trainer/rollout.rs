use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandwidth::TransmissionLedger;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::{Matrix, ParamStore};
use crate::slim::SlimModel;

/// One recorded episode. Per-agent arrays use the agent-major index
/// `i * len + t`.
#[derive(Clone, Debug)]
pub struct Episode {
    pub n_agents: usize,
    pub len: usize,
    /// `n * len x obs_dim` raw observations.
    pub observations: Matrix,
    pub actions: Vec<usize>,
    pub behaviour_log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Agent acted at that step; inactive rows carry no loss.
    pub active: Vec<bool>,
    /// Central values under the behaviour parameters.
    pub values: Vec<f64>,
    /// `V^i(s_T)` if the episode was cut by the cap, else 0.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub success: bool,
    pub scalars_sent: u64,
    pub violations: usize,
}

impl Episode {
    pub fn index(&self, agent: usize, t: usize) -> usize {
        agent * self.len + t
    }

    /// Undiscounted return averaged over agents.
    pub fn mean_agent_return(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.n_agents as f64
    }

    /// Fills `advantages` and `returns` agent by agent.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let len = self.len;
        self.advantages = vec![0.0; self.n_agents * len];
        self.returns = vec![0.0; self.n_agents * len];
        for i in 0..self.n_agents {
            let span = i * len..(i + 1) * len;
            let (a, r) = super::compute_gae(
                &self.rewards[span.clone()],
                &self.values[span.clone()],
                &self.dones[span.clone()],
                self.bootstrap[i],
                gamma,
                lambda,
            )?;
            self.advantages[span.clone()].copy_from_slice(&a);
            self.returns[span].copy_from_slice(&r);
        }
        Ok(())
    }
}

/// How actions are chosen during a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Runs one episode. The random stream `rng` first yields the environment
/// seed, then one uniform draw per agent per step.
pub fn run_episode(
    model: &SlimModel,
    store: &ParamStore,
    env: &mut dyn Environment,
    rng: &mut ChaCha8Rng,
    mode: ActionMode,
) -> Result<Episode> {
    let spec = env.spec().clone();
    let n = spec.n_agents;
    let mut obs = env.reset(rng.random());
    let mut memory = model.new_memory();
    let mut ledger = TransmissionLedger::new(n, model.budget().beta);
    let mut steps: Vec<StepRecord> = Vec::new();
    while !env.is_done() {
        let t = env.t();
        let active = env.acting();
        let out = model.step(store, &mut memory, &obs, t, Some(&mut ledger))?;
        ledger.end_step()?;
        let mut actions = Vec::with_capacity(n);
        let mut log_probs = Vec::with_capacity(n);
        for d in &out.dists {
            let u: f64 = rng.random();
            let a = match mode {
                ActionMode::Sample => d.sample_with(u),
                ActionMode::Greedy => d.argmax(),
            };
            log_probs.push(d.log_probs[a]);
            actions.push(a);
        }
        let res = env.step(&actions)?;
        steps.push(StepRecord {
            obs: std::mem::replace(&mut obs, res.observations),
            actions,
            log_probs,
            rewards: res.rewards,
            dones: res.dones,
            active,
            values: out.values,
        });
    }
    let len = steps.len();
    if len == 0 {
        return Err(Error::contract("environment finished without a step"));
    }
    // Agents that finished have a done flag, which cuts the bootstrap.
    let bootstrap = if env.t() >= spec.episode_cap {
        model.central_value(store, &model.encode(store, &obs)?)?
    } else {
        vec![0.0; n]
    };
    let mut ep = Episode {
        n_agents: n,
        len,
        observations: Matrix::zeros(n * len, spec.obs_dim),
        actions: vec![0; n * len],
        behaviour_log_probs: vec![0.0; n * len],
        rewards: vec![0.0; n * len],
        dones: vec![false; n * len],
        active: vec![false; n * len],
        values: vec![0.0; n * len],
        bootstrap,
        advantages: Vec::new(),
        returns: Vec::new(),
        success: env.success(),
        scalars_sent: ledger.total_scalars(),
        violations: ledger.violations().len(),
    };
    for (t, s) in steps.into_iter().enumerate() {
        for i in 0..n {
            let k = i * len + t;
            ep.observations.row_mut(k).copy_from_slice(&s.obs[i]);
            ep.actions[k] = s.actions[i];
            ep.behaviour_log_probs[k] = s.log_probs[i];
            ep.rewards[k] = s.rewards[i];
            ep.dones[k] = s.dones[i];
            ep.active[k] = s.active[i];
            ep.values[k] = s.values[i];
        }
    }
    Ok(ep)
}

struct StepRecord {
    obs: Vec<Vec<f64>>,
    actions: Vec<usize>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    active: Vec<bool>,
    values: Vec<f64>,
}

/// Random stream for episode `index` under `seed`.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}
