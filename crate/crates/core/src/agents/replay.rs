use std::collections::VecDeque;

use crate::error::{check_len, Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// 1 for a true terminal, 0 otherwise (including step-limit endings when
    /// bootstrapping through timeouts).
    pub done: f64,
}

/// Column-major view of sampled transitions, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub len: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub done: Vec<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let mut b = Batch {
            len: items.len(),
            state_dim: sd,
            action_dim: ad,
            states: Vec::with_capacity(items.len() * sd),
            actions: Vec::with_capacity(items.len() * ad),
            rewards: Vec::with_capacity(items.len()),
            next_states: Vec::with_capacity(items.len() * sd),
            done: Vec::with_capacity(items.len()),
        };
        for t in items {
            check_len("transition state", sd, t.state.len())?;
            check_len("transition next state", sd, t.next_state.len())?;
            check_len("transition action", ad, t.action.len())?;
            b.states.extend_from_slice(&t.state);
            b.actions.extend_from_slice(&t.action);
            b.rewards.push(t.reward);
            b.next_states.extend_from_slice(&t.next_state);
            b.done.push(t.done);
        }
        Ok(b)
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f64] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// `r + gamma (1 - d) v` per row.
    pub fn bootstrap(&self, gamma: f64, values: &[f64]) -> Vec<f64> {
        self.rewards
            .iter()
            .zip(&self.done)
            .zip(values)
            .map(|((r, d), v)| r + gamma * (1.0 - d) * v)
            .collect()
    }
}

/// Bounded FIFO store with uniform, with-replacement sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(transition);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.storage.get(i)
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Batch> {
        if self.storage.is_empty() {
            return Err(Error::InsufficientData { need: 1, have: 0 });
        }
        let picks: Vec<&Transition> = (0..n)
            .map(|_| &self.storage[rng.index(self.storage.len())])
            .collect();
        Batch::from_transitions(&picks)
    }
}
