//! Uniform experience replay.

use ndarray::Array2;
use rand::Rng;

/// What the agent chose, in the representation its learner consumes:
/// preset indices for discrete heads, squashed [0,1] components otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionRecord {
    Presets(Vec<usize>),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: ActionRecord,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring; once full, each push evicts the oldest entry.
#[derive(Debug)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { data: Vec::new(), capacity, head: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        debug_assert!(t.reward.is_finite(), "rewards must be capped before storage");
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Uniform sample with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a Transition> {
        assert!(!self.is_empty());
        (0..batch).map(|_| &self.data[rng.gen_range(0..self.data.len())]).collect()
    }
}

/// Stack per-transition state vectors into a (batch, dim) matrix.
pub fn stack_states(batch: &[&Transition]) -> Array2<f64> {
    let dim = batch[0].state.len();
    Array2::from_shape_fn((batch.len(), dim), |(b, d)| batch[b].state[d])
}

pub fn stack_next_states(batch: &[&Transition]) -> Array2<f64> {
    let dim = batch[0].next_state.len();
    Array2::from_shape_fn((batch.len(), dim), |(b, d)| batch[b].next_state[d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn t(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: ActionRecord::Presets(vec![0]),
            reward: -tag,
            next_state: vec![tag + 1.0],
            done: false,
        }
    }

    #[test]
    fn holds_exactly_what_was_pushed_until_capacity() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..3 {
            buf.push(t(i as f64));
            assert_eq!(buf.len(), i + 1);
        }
        for i in 3..7 {
            buf.push(t(i as f64));
            assert_eq!(buf.len(), 3);
        }
        // After 7 pushes into capacity 3, the survivors are the last three.
        let mut tags: Vec<f64> = (0..3).map(|i| buf.get(i).state[0]).collect();
        tags.sort_by(f64::total_cmp);
        assert_eq!(tags, vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn eviction_is_oldest_first() {
        let mut buf = ReplayBuffer::new(2);
        buf.push(t(0.0));
        buf.push(t(1.0));
        buf.push(t(2.0));
        let mut tags: Vec<f64> = (0..2).map(|i| buf.get(i).state[0]).collect();
        tags.sort_by(f64::total_cmp);
        assert_eq!(tags, vec![1.0, 2.0]);
    }

    #[test]
    fn sampling_reaches_every_slot() {
        let mut buf = ReplayBuffer::new(64);
        for i in 0..64 {
            buf.push(t(i as f64));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut hits = vec![0usize; 64];
        for _ in 0..1000 {
            for s in buf.sample(100, &mut rng) {
                hits[s.state[0] as usize] += 1;
            }
        }
        // 100k draws over 64 slots: every slot is visited, and counts stay
        // within a factor two of the uniform expectation.
        let expect = 100_000.0 / 64.0;
        for (i, &h) in hits.iter().enumerate() {
            assert!(h > 0, "slot {i} never sampled");
            assert!((h as f64) > expect / 2.0 && (h as f64) < expect * 2.0, "slot {i}: {h}");
        }
    }

    #[test]
    fn stacking_preserves_order_and_shape() {
        let items: Vec<Transition> = (0..4).map(|i| t(i as f64)).collect();
        let refs: Vec<&Transition> = items.iter().collect();
        let s = stack_states(&refs);
        let n = stack_next_states(&refs);
        assert_eq!(s.shape(), &[4, 1]);
        assert_eq!(s[[2, 0]], 2.0);
        assert_eq!(n[[2, 0]], 3.0);
    }
}
