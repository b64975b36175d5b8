//! Simpler aggregators behind the same agent interface.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{linear_forward, Linear, ParamStore};
use crate::slim::Message;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    /// Temporal attention over cached and current messages.
    #[default]
    Slim,
    /// Mean of current peer payloads, lifted by one linear map.
    MeanPool,
    /// No communication; the context is identically zero.
    None,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 3] = [AggregatorKind::Slim, AggregatorKind::MeanPool, AggregatorKind::None];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregatorKind::Slim => "slim",
            AggregatorKind::MeanPool => "mean_pool",
            AggregatorKind::None => "none",
        }
    }

    pub fn communicates(self) -> bool {
        self != AggregatorKind::None
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown aggregator `{s}` (slim, mean_pool, none)")))
    }
}

/// Elementwise mean of the payloads; empty input gives an empty vector.
pub fn mean_payload(peers: &[Message]) -> Vec<f64> {
    let Some(first) = peers.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.payload.len()];
    for m in peers {
        acc.iter_mut().zip(&m.payload).for_each(|(a, p)| *a += p);
    }
    let n = peers.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Mean of the peers' payloads lifted to model width. No peers gives a
/// zero context.
pub fn mean_pool_aggregate(store: &ParamStore, lift: &Linear, peers: &[Message]) -> Result<Vec<f64>> {
    if peers.is_empty() {
        return Ok(vec![0.0; lift.out_dim()]);
    }
    if peers.iter().any(|m| m.payload.len() != lift.in_dim()) {
        return Err(Error::contract("peer payload width differs from the lift input"));
    }
    linear_forward(store, lift, &mean_payload(peers))
}

pub fn no_comm_aggregate(width: usize) -> Vec<f64> {
    vec![0.0; width]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn msg(sender: usize, payload: Vec<f64>) -> Message {
        Message {
            payload,
            sender,
            timestep: 0,
        }
    }

    #[test]
    fn mean_of_opposites_is_zero() {
        let v = vec![0.3, -1.2, 4.0];
        let neg = v.iter().map(|x| -x).collect();
        assert_eq!(mean_payload(&[msg(0, v), msg(1, neg)]), vec![0.0; 3]);
    }

    #[test]
    fn mean_of_equals_is_the_payload() {
        let v = vec![0.25, 2.0];
        assert_eq!(mean_payload(&[msg(0, v.clone()), msg(1, v.clone()), msg(2, v.clone())]), v);
    }

    #[test]
    fn empty_peers_give_zero_context() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lift = Linear::new(&mut store, "lift", 2, 5, 1.0, &mut rng).unwrap();
        assert_eq!(mean_pool_aggregate(&store, &lift, &[]).unwrap(), vec![0.0; 5]);
        assert_eq!(no_comm_aggregate(4), vec![0.0; 4]);
    }

    #[test]
    fn parses_names() {
        assert_eq!("mean_pool".parse::<AggregatorKind>().unwrap(), AggregatorKind::MeanPool);
        assert!("tarmac".parse::<AggregatorKind>().is_err());
    }
}
