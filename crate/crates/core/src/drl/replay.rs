use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// The action the environment executed (after clipping).
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True terminal only; horizon truncation stays false.
    pub done: bool,
}

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    /// Slot overwritten by the next push once full.
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.data.is_empty() {
            return Err(Error::Internal("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.data.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(batch, rng)?.into_iter().map(|i| &self.data[i]).collect())
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.data.get(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            obs: vec![r],
            action: vec![0.0],
            reward: r,
            next_obs: vec![r],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        for r in [1.0, 2.0, 3.0] {
            buf.push(t(r));
        }
        assert_eq!(buf.len(), 2);
        let mut rewards: Vec<f64> = (0..2).map(|i| buf.get(i).unwrap().reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0]);
        buf.push(t(4.0));
        let mut rewards: Vec<f64> = (0..2).map(|i| buf.get(i).unwrap().reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![3.0, 4.0]);
    }

    #[test]
    fn empty_sample_is_error() {
        let buf = ReplayBuffer::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf.sample(1, &mut rng).is_err());
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn single_element_always_sampled() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        buf.push(t(7.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(buf.sample(50, &mut rng).unwrap().iter().all(|x| x.reward == 7.0));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for r in 0..10 {
            buf.push(t(f64::from(r)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 10];
        for i in buf.sample_indices(100_000, &mut rng).unwrap() {
            counts[i] += 1;
        }
        let chi2: f64 = counts.iter().map(|&n| (n as f64 - 10_000.0).powi(2) / 10_000.0).sum();
        // 0.999 quantile of chi-square with 9 degrees of freedom.
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }
}
