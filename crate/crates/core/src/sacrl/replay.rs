use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Model index per client.
    pub action: Vec<usize>,
    /// Team reward: summed gain of the step.
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Columnar minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let d = ts.first().map_or(0, |t| t.state.len());
        let rows = |f: &dyn Fn(&Transition) -> &Vec<f64>| {
            Array2::from_shape_vec((ts.len(), d), ts.iter().flat_map(|t| f(t).iter().copied()).collect())
                .expect("uniform state length")
        };
        Self {
            states: rows(&|t| &t.state),
            actions: ts.iter().map(|t| t.action.clone()).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: rows(&|t| &t.next_state),
            dones: ts.iter().map(|t| t.done).collect(),
        }
    }
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Batch {
        let picks: Vec<&Transition> = (0..batch)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect();
        Batch::from_transitions(&picks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(i: usize) -> Transition {
        Transition {
            state: vec![i as f64; 3],
            action: vec![i % 2],
            reward: i as f64,
            next_state: vec![0.0; 3],
            done: false,
        }
    }

    #[test]
    fn ring_overwrite() {
        let mut b = ReplayBuffer::new(4);
        for i in 0..10 {
            b.push(t(i));
            assert!(b.len() <= 4);
        }
        let mut rewards: Vec<f64> = b.items.iter().map(|x| x.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn seeded_sampling_reproducible() {
        let mut b = ReplayBuffer::new(100);
        (0..50).for_each(|i| b.push(t(i)));
        let s1 = b.sample(16, &mut ChaCha8Rng::seed_from_u64(5));
        let s2 = b.sample(16, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(s1, s2);
        assert_eq!(s1.states.dim(), (16, 3));
    }
}
