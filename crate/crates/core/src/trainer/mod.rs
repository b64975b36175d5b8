//! Per-agent PPO with a centralised critic: rollouts, GAE, the clipped
//! surrogate and the agent-averaged loss, Adam updates.

mod gae;
mod loss;
mod rollout;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Grads, ParamStore, Tape};
use crate::slim::{ModelConfig, ModelDims, SlimModel};

pub use gae::compute_gae;
pub use loss::{clipped_surrogate, episode_loss, ppo_policy_loss, surrogate, value_loss, LossParts, LossSpec};
pub use rollout::{episode_rng, run_episode, ActionMode, Episode};

/// `[train]` section of the run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub clip_epsilon: f64,
    /// Entropy bonus temperature.
    pub entropy_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub ppo_epochs: usize,
    pub episodes_per_epoch: usize,
    pub epochs: usize,
    /// Recent episodes kept for PPO passes; values up to
    /// `episodes_per_epoch` mean fresh data only.
    pub replay_episodes: usize,
    pub normalize_advantages: bool,
    pub max_grad_norm: f64,
    /// Write a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clip_epsilon: 0.2,
            entropy_coef: 0.02,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 5e-4,
            ppo_epochs: 5,
            episodes_per_epoch: 50,
            epochs: 300,
            replay_episodes: 0,
            normalize_advantages: true,
            max_grad_norm: 0.5,
            checkpoint_every: 0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return bad("entropy_coef must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.episodes_per_epoch == 0 {
            return bad("episodes_per_epoch must be positive");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// Per-epoch training metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_return: f64,
    pub mean_steps: f64,
    pub success_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub grad_norm: f64,
    pub scalars_sent: f64,
    pub budget_violations: f64,
}

impl EpochMetrics {
    /// `(name, value)` pairs in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("mean_return", self.mean_return),
            ("mean_steps", self.mean_steps),
            ("success_rate", self.success_rate),
            ("policy_loss", self.policy_loss),
            ("value_loss", self.value_loss),
            ("entropy", self.entropy),
            ("total_loss", self.total_loss),
            ("grad_norm", self.grad_norm),
            ("scalars_sent", self.scalars_sent),
            ("budget_violations", self.budget_violations),
        ]
    }
}

/// Statistics of a batch of rollouts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_steps: f64,
    pub success_rate: f64,
}

impl EvalMetrics {
    pub fn of(episodes: &[Episode]) -> Self {
        let e = episodes.len().max(1) as f64;
        EvalMetrics {
            episodes: episodes.len(),
            mean_return: episodes.iter().map(Episode::mean_agent_return).sum::<f64>() / e,
            mean_steps: episodes.iter().map(|ep| ep.len as f64).sum::<f64>() / e,
            success_rate: episodes.iter().filter(|ep| ep.success).count() as f64 / e,
        }
    }
}

/// Runs `count` episodes with streams `first..first + count` of `seed`,
/// in parallel, returned in index order.
pub fn collect_rollouts(
    model: &SlimModel,
    store: &ParamStore,
    env: &EnvConfig,
    seed: u64,
    first: u64,
    count: usize,
    mode: ActionMode,
) -> Result<Vec<Episode>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut e = env.build()?;
            let mut rng = episode_rng(seed, first + k);
            run_episode(model, store, e.as_mut(), &mut rng, mode)
        })
        .collect()
}

/// Model, parameters and optimiser state for one training run.
pub struct Trainer {
    env: EnvConfig,
    spec: EnvSpec,
    train: TrainConfig,
    model: SlimModel,
    store: ParamStore,
    adam: AdamState,
    replay: VecDeque<Episode>,
    sampler: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(env: &EnvConfig, model: &ModelConfig, train: &TrainConfig) -> Result<Self> {
        train.validate()?;
        let mut env = env.clone();
        env.gamma = train.gamma;
        let spec = env.spec()?;
        let mut store = ParamStore::new();
        let mut init = ChaCha8Rng::seed_from_u64(train.seed);
        let model = SlimModel::new(&mut store, model, ModelDims::from(&spec), &mut init)?;
        let adam = AdamState::for_store(
            AdamConfig {
                lr: train.learning_rate,
                ..AdamConfig::default()
            },
            &store,
        );
        let mut sampler = ChaCha8Rng::seed_from_u64(train.seed);
        sampler.set_stream(u64::MAX);
        Ok(Trainer {
            env,
            spec,
            train: train.clone(),
            model,
            store,
            adam,
            replay: VecDeque::new(),
            sampler,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &SlimModel {
        &self.model
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env
    }

    pub fn config(&self) -> &TrainConfig {
        &self.train
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    /// Sampled rollouts for the given epoch, advantages filled in.
    pub fn collect(&self, epoch: usize) -> Result<Vec<Episode>> {
        let per = self.train.episodes_per_epoch;
        let mut eps = collect_rollouts(
            &self.model,
            &self.store,
            &self.env,
            self.train.seed,
            (epoch * per) as u64,
            per,
            ActionMode::Sample,
        )?;
        for ep in &mut eps {
            ep.compute_advantages(self.train.gamma, self.train.gae_lambda)?;
        }
        Ok(eps)
    }

    /// Loss and gradient over a batch; gradients are summed in batch order.
    pub fn loss_and_grads(&self, batch: &[&Episode]) -> Result<(LossParts, Grads)> {
        let spec = LossSpec::for_batch(batch, self.train.clip_epsilon, self.train.entropy_coef)?;
        let advs = self.batch_advantages(batch)?;
        let per_episode: Vec<(LossParts, Grads)> = batch
            .par_iter()
            .zip(advs.par_iter())
            .map(|(ep, adv)| {
                let mut tape = Tape::new(&self.store);
                let (loss, parts) = episode_loss(&mut tape, &self.model, ep, adv, &spec)?;
                let mut grads = Grads::zeros_like(&self.store);
                tape.backward_into(loss, &mut grads)?;
                Ok((parts, grads))
            })
            .collect::<Result<_>>()?;
        let mut total = LossParts::default();
        let mut grads = Grads::zeros_like(&self.store);
        for (p, g) in &per_episode {
            total.add(p);
            grads.add(g);
        }
        Ok((total, grads))
    }

    fn batch_advantages(&self, batch: &[&Episode]) -> Result<Vec<Vec<f64>>> {
        let mut advs: Vec<Vec<f64>> = batch.iter().map(|ep| ep.advantages.clone()).collect();
        if advs.iter().zip(batch).any(|(a, ep)| a.len() != ep.n_agents * ep.len) {
            return Err(Error::contract("episode advantages not computed"));
        }
        if !self.train.normalize_advantages {
            return Ok(advs);
        }
        let active: Vec<f64> = advs
            .iter()
            .zip(batch)
            .flat_map(|(a, ep)| a.iter().zip(&ep.active).filter(|(_, &on)| on).map(|(x, _)| *x))
            .collect();
        let n = active.len().max(1) as f64;
        let mean = active.iter().sum::<f64>() / n;
        let std = (active.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        for a in &mut advs {
            a.iter_mut().for_each(|x| *x = (*x - mean) / (std + 1e-8));
        }
        Ok(advs)
    }

    /// One epoch: collect fresh rollouts, run the PPO passes, report.
    pub fn train_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.epoch;
        let fresh = self.collect(epoch)?;
        let rollout = EvalMetrics::of(&fresh);
        let scalars = fresh.iter().map(|e| e.scalars_sent).sum::<u64>() as f64;
        let violations = fresh.iter().map(|e| e.violations).sum::<usize>() as f64;

        let per = self.train.episodes_per_epoch;
        let replaying = self.train.replay_episodes > per;
        if replaying {
            self.replay.extend(fresh.iter().cloned());
            while self.replay.len() > self.train.replay_episodes {
                self.replay.pop_front();
            }
        }
        let mut last = LossParts::default();
        let mut grad_norm = 0.0;
        for _ in 0..self.train.ppo_epochs {
            let batch: Vec<&Episode> = if replaying {
                (0..per)
                    .map(|_| &self.replay[self.sampler.random_range(0..self.replay.len())])
                    .collect()
            } else {
                fresh.iter().collect()
            };
            let (parts, grads) = self.loss_and_grads(&batch)?;
            let total = parts.total(self.train.entropy_coef);
            if !total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!(
                        "non-finite loss (policy {}, value {}, entropy {})",
                        parts.policy, parts.value, parts.entropy
                    ),
                });
            }
            self.store.zero_grads();
            self.store.accumulate(&grads)?;
            grad_norm = self.store.clip_grad_norm(self.train.max_grad_norm);
            if !grad_norm.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite gradient norm at loss {total}"),
                });
            }
            self.adam.step(&mut self.store)?;
            last = parts;
        }
        if self.train.ppo_epochs == 0 {
            let batch: Vec<&Episode> = fresh.iter().collect();
            last = self.loss_and_grads(&batch)?.0;
        }
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch,
            mean_return: rollout.mean_return,
            mean_steps: rollout.mean_steps,
            success_rate: rollout.success_rate,
            policy_loss: last.policy,
            value_loss: last.value,
            entropy: last.entropy,
            total_loss: last.total(self.train.entropy_coef),
            grad_norm,
            scalars_sent: scalars,
            budget_violations: violations,
        })
    }

    /// Rollouts with streams of `seed`, independent of training streams.
    pub fn evaluate(&self, episodes: usize, seed: u64, mode: ActionMode) -> Result<EvalMetrics> {
        if episodes == 0 {
            return Err(Error::config("evaluation needs at least one episode"));
        }
        let eps = collect_rollouts(&self.model, &self.store, &self.env, seed, 0, episodes, mode)?;
        Ok(EvalMetrics::of(&eps))
    }
}

/// Worker threads from `SLIM_THREADS` (default: all cores).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("SLIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config(format!("SLIM_THREADS = `{v}` is not a positive integer")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}
