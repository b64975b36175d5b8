//! Normalised agent bandwidth.
//!
//! A communication strategy with graph density `sigma` (fraction of the
//! population each agent addresses), `rounds` exchanges per environment step
//! and messages of `dim` scalars is feasible under a per-agent budget `beta`
//! iff `sigma * rounds * dim <= beta`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthBudget {
    pub sigma: f64,
    pub rounds: u32,
    pub dim: usize,
    pub beta: f64,
}

fn check_sigma_beta(sigma: f64, beta: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::config(format!("graph density sigma = {sigma} outside (0, 1]")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::config(format!("bandwidth beta = {beta} must be positive")));
    }
    Ok(())
}

impl BandwidthBudget {
    pub fn new(sigma: f64, rounds: u32, dim: usize, beta: f64) -> Self {
        BandwidthBudget { sigma, rounds, dim, beta }
    }

    /// Normalised scalars per agent per step, `sigma * rounds * dim`.
    pub fn load(&self) -> f64 {
        self.sigma * self.rounds as f64 * self.dim as f64
    }

    /// `Ok(true)` iff the strategy fits the budget.
    pub fn validate(&self) -> Result<bool> {
        check_sigma_beta(self.sigma, self.beta)?;
        if self.rounds == 0 {
            return Err(Error::config("communication rounds must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("message dimension must be at least 1"));
        }
        Ok(self.load() <= self.beta)
    }

    /// Like [`validate`](Self::validate) but turns infeasibility into an error
    /// that prints the violated inequality.
    pub fn require_feasible(&self) -> Result<()> {
        if self.validate()? {
            Ok(())
        } else {
            Err(Error::config(format!(
                "bandwidth constraint violated: sigma x k x d = {} x {} x {} = {} > beta = {}",
                self.sigma,
                self.rounds,
                self.dim,
                self.load(),
                self.beta
            )))
        }
    }
}

/// Largest integer message dimension satisfying the budget, or `None` when
/// not even `d = 1` fits.
pub fn max_message_dim(beta: f64, sigma: f64, rounds: u32) -> Result<Option<usize>> {
    check_sigma_beta(sigma, beta)?;
    if rounds == 0 {
        return Err(Error::config("communication rounds must be at least 1"));
    }
    let per_dim = sigma * rounds as f64;
    let mut d = (beta / per_dim).floor().max(0.0) as usize;
    // floor() of a rounded quotient can be off by one; settle against the exact predicate.
    while (d + 1) as f64 * per_dim <= beta {
        d += 1;
    }
    while d > 0 && d as f64 * per_dim > beta {
        d -= 1;
    }
    Ok((d >= 1).then_some(d))
}

/// A transmission that broke the budget.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct BudgetViolation {
    pub agent: usize,
    pub step: usize,
    pub normalised_load: f64,
    pub beta: f64,
}

impl fmt::Display for BudgetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bandwidth budget exceeded: agent {} sent {} normalised scalars at step {} (beta = {})",
            self.agent, self.normalised_load, self.step, self.beta
        )
    }
}

/// Per-step accounting of scalars put on the channel.
///
/// Raw counts are `recipients * dim` summed over a step's transmissions; the
/// normalised load divides by the `n - 1` possible peers, which is the
/// `sigma * k * d` of a uniform strategy.
#[derive(Clone, Debug)]
pub struct TransmissionLedger {
    n_agents: usize,
    beta: f64,
    step: usize,
    current: Vec<u64>,
    totals: Vec<u64>,
    violations: Vec<BudgetViolation>,
    transmissions: u64,
}

impl TransmissionLedger {
    pub fn new(n_agents: usize, beta: f64) -> Self {
        TransmissionLedger {
            n_agents,
            beta,
            step: 0,
            current: vec![0; n_agents],
            totals: vec![0; n_agents],
            violations: Vec::new(),
            transmissions: 0,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn record_transmission(
        &mut self,
        sender: usize,
        recipients: &[usize],
        _round: u32,
        dim: usize,
    ) -> Result<()> {
        if sender >= self.n_agents || recipients.iter().any(|&r| r >= self.n_agents) {
            return Err(Error::contract("transmission names an unknown agent"));
        }
        if recipients.contains(&sender) {
            return Err(Error::contract("an agent does not transmit to itself"));
        }
        self.current[sender] += (recipients.len() * dim) as u64;
        self.totals[sender] += (recipients.len() * dim) as u64;
        self.transmissions += 1;
        Ok(())
    }

    fn normaliser(&self) -> f64 {
        self.n_agents.saturating_sub(1).max(1) as f64
    }

    /// Normalised load of `agent` in the current step.
    pub fn normalised_load(&self, agent: usize) -> f64 {
        self.current[agent] as f64 / self.normaliser()
    }

    /// Fails on the first agent whose current-step load exceeds `beta`.
    pub fn assert_within_budget(&self) -> std::result::Result<(), BudgetViolation> {
        for agent in 0..self.n_agents {
            let load = self.normalised_load(agent);
            if load > self.beta {
                return Err(BudgetViolation {
                    agent,
                    step: self.step,
                    normalised_load: load,
                    beta: self.beta,
                });
            }
        }
        Ok(())
    }

    /// Checks the finished step, records any violation and starts the next.
    pub fn end_step(&mut self) -> std::result::Result<(), BudgetViolation> {
        let verdict = self.assert_within_budget();
        if let Err(v) = &verdict {
            self.violations.push(v.clone());
        }
        self.current.iter_mut().for_each(|c| *c = 0);
        self.step += 1;
        verdict
    }

    pub fn violations(&self) -> &[BudgetViolation] {
        &self.violations
    }

    /// Raw scalars sent by each agent since creation.
    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    pub fn total_scalars(&self) -> u64 {
        self.totals.iter().sum()
    }

    pub fn transmissions(&self) -> u64 {
        self.transmissions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appendix_examples() {
        assert!(BandwidthBudget::new(1.0, 1, 64, 64.0).validate().unwrap());
        assert!(!BandwidthBudget::new(1.0, 2, 1, 1.0).validate().unwrap());
        assert!(BandwidthBudget::new(0.5, 2, 1, 1.0).validate().unwrap());
    }

    #[test]
    fn max_dim_examples() {
        assert_eq!(max_message_dim(64.0, 1.0, 1).unwrap(), Some(64));
        assert_eq!(max_message_dim(1.0, 1.0, 2).unwrap(), None);
        assert_eq!(max_message_dim(8.0, 0.5, 2).unwrap(), Some(8));
    }

    #[test]
    fn bounds_are_config_errors() {
        assert!(BandwidthBudget::new(0.0, 1, 1, 1.0).validate().is_err());
        assert!(BandwidthBudget::new(1.5, 1, 1, 1.0).validate().is_err());
        assert!(BandwidthBudget::new(1.0, 0, 1, 1.0).validate().is_err());
        assert!(BandwidthBudget::new(1.0, 1, 0, 1.0).validate().is_err());
        assert!(BandwidthBudget::new(1.0, 1, 1, -2.0).validate().is_err());
        assert!(max_message_dim(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn broadcast_at_budget_is_within() {
        let mut ledger = TransmissionLedger::new(3, 4.0);
        ledger.record_transmission(0, &[1, 2], 0, 4).unwrap();
        assert!(ledger.assert_within_budget().is_ok());
        ledger.record_transmission(0, &[1, 2], 1, 4).unwrap();
        let v = ledger.assert_within_budget().unwrap_err();
        assert_eq!(v.agent, 0);
        assert_eq!(
            v.to_string(),
            "bandwidth budget exceeded: agent 0 sent 8 normalised scalars at step 0 (beta = 4)"
        );
    }

    #[test]
    fn silence_is_within_budget() {
        let mut ledger = TransmissionLedger::new(5, 1.0);
        assert!(ledger.end_step().is_ok());
        assert_eq!(ledger.total_scalars(), 0);
        assert!(ledger.violations().is_empty());
    }

    #[test]
    fn inexact_quotients_settle_on_the_predicate() {
        let d = max_message_dim(0.9, 0.3, 1).unwrap().unwrap();
        assert!(BandwidthBudget::new(0.3, 1, d, 0.9).validate().unwrap());
        assert!(!BandwidthBudget::new(0.3, 1, d + 1, 0.9).validate().unwrap());
    }
}
