use std::rc::Rc;

use super::Episode;
use crate::error::{Error, Result};
use crate::nn::{Matrix, Tape, Var};
use crate::slim::SlimModel;

/// `min(ρA, clip(ρ, 1-ε, 1+ε)A)` for one sample.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Per-sample clipped surrogate on the tape; `ratio` and `advantages`
/// are columns of equal length.
pub fn surrogate(tape: &mut Tape<'_>, ratio: Var, advantages: Var, eps: f64) -> Result<Var> {
    let unclipped = tape.mul(ratio, advantages)?;
    let clipped = tape.clamp(ratio, 1.0 - eps, 1.0 + eps);
    let clipped = tape.mul(clipped, advantages)?;
    tape.min(unclipped, clipped)
}

/// `-mean(surrogate) - alpha * mean(entropy)` over one agent's samples.
pub fn ppo_policy_loss(ratios: &[f64], advantages: &[f64], entropies: &[f64], eps: f64, alpha: f64) -> Result<f64> {
    let n = ratios.len();
    if n == 0 || advantages.len() != n || entropies.len() != n {
        return Err(Error::contract("policy loss inputs must be non-empty and aligned"));
    }
    if advantages.iter().any(|a| a.is_nan()) {
        return Err(Error::Numerical("NaN advantage".into()));
    }
    let surr: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| clipped_surrogate(r, a, eps))
        .sum::<f64>()
        / n as f64;
    let ent = entropies.iter().sum::<f64>() / n as f64;
    Ok(-surr - alpha * ent)
}

/// Mean squared error between predictions and targets.
pub fn value_loss(values: &[f64], targets: &[f64]) -> Result<f64> {
    if values.is_empty() || values.len() != targets.len() {
        return Err(Error::contract("value loss inputs must be non-empty and aligned"));
    }
    Ok(values.iter().zip(targets).map(|(v, r)| (v - r).powi(2)).sum::<f64>() / values.len() as f64)
}

/// Loss hyperparameters and the per-agent weights that turn per-episode
/// sums into batch means: `weights[i] = 1 / (n_eff * N_i)`, where `N_i`
/// counts agent `i`'s active samples over the whole batch.
#[derive(Clone, Debug)]
pub struct LossSpec {
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub agent_weights: Vec<f64>,
}

impl LossSpec {
    pub fn for_batch(batch: &[&Episode], clip_epsilon: f64, entropy_coef: f64) -> Result<Self> {
        let n = batch.first().map_or(0, |e| e.n_agents);
        let mut counts = vec![0usize; n];
        for ep in batch {
            for i in 0..n {
                counts[i] += (0..ep.len).filter(|&t| ep.active[ep.index(i, t)]).count();
            }
        }
        let n_eff = counts.iter().filter(|&&c| c > 0).count();
        if n_eff == 0 {
            return Err(Error::contract("batch holds no active samples"));
        }
        let agent_weights = counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 / (n_eff * c) as f64 })
            .collect();
        Ok(LossSpec {
            clip_epsilon,
            entropy_coef,
            agent_weights,
        })
    }
}

/// This episode's (already weighted) share of the batch loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    /// `-(1/n) Σ_i mean(surrogate)` contribution.
    pub policy: f64,
    /// `(1/n) Σ_i mean(entropy)` contribution.
    pub entropy: f64,
    pub value: f64,
}

impl LossParts {
    pub fn total(&self, entropy_coef: f64) -> f64 {
        self.policy - entropy_coef * self.entropy + self.value
    }

    pub fn add(&mut self, o: &LossParts) {
        self.policy += o.policy;
        self.entropy += o.entropy;
        self.value += o.value;
    }
}

/// Builds `(1/n) Σ_i (L^p_i + L^v_i)` restricted to this episode, with
/// `advantages` aligned to the episode's agent-major rows.
pub fn episode_loss(
    tape: &mut Tape<'_>,
    model: &SlimModel,
    ep: &Episode,
    advantages: &[f64],
    spec: &LossSpec,
) -> Result<(Var, LossParts)> {
    let (n, len) = (ep.n_agents, ep.len);
    let rows = n * len;
    if advantages.len() != rows || ep.returns.len() != rows {
        return Err(Error::contract("advantages/returns missing for episode"));
    }
    if advantages.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numerical("non-finite advantage".into()));
    }
    let vars = model.forward_episode(tape, &ep.observations, len)?;
    let w: Vec<f64> = (0..rows)
        .map(|k| if ep.active[k] { spec.agent_weights[k / len] } else { 0.0 })
        .collect();

    let picked = tape.pick_cols(vars.log_probs, ep.actions.clone().into())?;
    let behaviour = tape.constant(Matrix::from_vec(rows, 1, ep.behaviour_log_probs.clone())?);
    let log_ratio = tape.sub(picked, behaviour)?;
    let ratio = tape.exp(log_ratio);
    let adv = tape.constant(Matrix::from_vec(rows, 1, advantages.to_vec())?);
    let surr = surrogate(tape, ratio, adv, spec.clip_epsilon)?;
    let neg_w: Rc<[f64]> = w.iter().map(|x| -x).collect();
    let policy = tape.weighted_sum(surr, neg_w)?;

    let probs = tape.exp(vars.log_probs);
    let plogp = tape.mul(probs, vars.log_probs)?;
    let neg_entropy = tape.row_sum(plogp);
    let ent_w: Rc<[f64]> = w.iter().map(|x| spec.entropy_coef * x).collect();
    let entropy_term = tape.weighted_sum(neg_entropy, ent_w)?;

    // values are T x n: entry (t, i) at t * n + i
    let mut targets = Matrix::zeros(len, n);
    let mut vw = vec![0.0; rows];
    for i in 0..n {
        for t in 0..len {
            let k = ep.index(i, t);
            targets.set(t, i, ep.returns[k]);
            vw[t * n + i] = w[k];
        }
    }
    let targets = tape.constant(targets);
    let diff = tape.sub(vars.values, targets)?;
    let sq = tape.mul(diff, diff)?;
    let value = tape.weighted_sum(sq, vw.into())?;

    let parts = LossParts {
        policy: tape.scalar(policy),
        entropy: -tape.value(neg_entropy).data().iter().zip(&w).map(|(x, w)| x * w).sum::<f64>(),
        value: tape.scalar(value),
    };
    let loss = tape.add(policy, entropy_term)?;
    let loss = tape.add(loss, value)?;
    Ok((loss, parts))
}
