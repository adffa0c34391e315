use crate::neural::Rng;
use crate::sim::Action;

/// One `(s, a, r, s', done)` experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f32>,
    pub a: Action,
    pub r: f64,
    pub s_next: Vec<f32>,
    pub done: bool,
}

/// Fixed-capacity FIFO experience store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
    rng: Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: Rng) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append, overwriting the oldest item once full.
    pub fn push(&mut self, t: Transition) {
        if let Some(first) = self.items.first() {
            debug_assert_eq!(first.s.len(), t.s.len(), "observation size changed");
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Indices of a uniform sample without replacement.
    pub fn sample_indices(&mut self, k: usize) -> Vec<usize> {
        self.rng.sample_distinct(self.items.len(), k)
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn sample(&mut self, k: usize) -> Vec<&Transition> {
        let idx = self.sample_indices(k);
        idx.into_iter().map(|i| &self.items[i]).collect()
    }
}
