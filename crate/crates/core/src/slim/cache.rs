use crate::error::{Error, Result};

/// A transmitted message: the only data that crosses between agents.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub payload: Vec<f64>,
    pub sender: usize,
    pub timestep: usize,
}

/// Append-only history of every message exchanged in the current episode,
/// own messages included.
///
/// Messages are broadcast to all peers, so each agent's cache holds the
/// same entries; one copy is kept per episode.
#[derive(Clone, Debug)]
pub struct MessageCache {
    n_agents: usize,
    dim: usize,
    entries: Vec<Message>,
}

impl MessageCache {
    pub fn new(n_agents: usize, dim: usize) -> Self {
        MessageCache {
            n_agents,
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Message] {
        &self.entries
    }

    /// Total payload scalars held.
    pub fn payload_scalars(&self) -> usize {
        self.entries.len() * self.dim
    }

    /// Messages stamped with `timestep`.
    pub fn at(&self, timestep: usize) -> impl Iterator<Item = &Message> {
        self.entries.iter().filter(move |m| m.timestep == timestep)
    }

    pub fn last_timestep(&self) -> Option<usize> {
        self.entries.last().map(|m| m.timestep)
    }

    /// Appends one step's messages: exactly one per agent, all with the
    /// same timestep, none already cached.
    pub fn append(&mut self, msgs: Vec<Message>) -> Result<()> {
        if msgs.len() != self.n_agents {
            return Err(Error::contract(format!(
                "cache append needs {} messages, got {}",
                self.n_agents,
                msgs.len()
            )));
        }
        let t = msgs[0].timestep;
        let mut seen = vec![false; self.n_agents];
        for m in &msgs {
            if m.payload.len() != self.dim {
                return Err(Error::contract(format!(
                    "message payload has {} scalars, channel carries {}",
                    m.payload.len(),
                    self.dim
                )));
            }
            if m.timestep != t || m.sender >= self.n_agents {
                return Err(Error::contract("messages of one append must share a timestep"));
            }
            if seen[m.sender] || self.at(t).any(|c| c.sender == m.sender) {
                return Err(Error::contract(format!(
                    "duplicate message from agent {} at step {t}",
                    m.sender
                )));
            }
            seen[m.sender] = true;
        }
        self.entries.extend(msgs);
        Ok(())
    }

    /// Empties the cache; called at episode reset.
    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(n: usize, t: usize, d: usize) -> Vec<Message> {
        (0..n)
            .map(|i| Message {
                payload: vec![i as f64; d],
                sender: i,
                timestep: t,
            })
            .collect()
    }

    #[test]
    fn grows_by_n_per_step() {
        let mut c = MessageCache::new(3, 2);
        c.append(step(3, 0, 2)).unwrap();
        assert_eq!(c.len(), 3);
        for t in 1..5 {
            c.append(step(3, t, 2)).unwrap();
        }
        assert_eq!(c.len(), 15);
        assert_eq!(c.payload_scalars(), 30);
    }

    #[test]
    fn duplicate_stamp_is_rejected() {
        let mut c = MessageCache::new(2, 1);
        c.append(step(2, 0, 1)).unwrap();
        assert!(matches!(c.append(step(2, 0, 1)), Err(Error::Contract(_))));
        let mut twice = step(2, 1, 1);
        twice[1].sender = 0;
        assert!(matches!(c.append(twice), Err(Error::Contract(_))));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut c = MessageCache::new(2, 3);
        assert!(c.append(step(2, 0, 2)).is_err());
    }
}
