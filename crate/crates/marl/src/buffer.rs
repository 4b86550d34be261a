use std::collections::VecDeque;

use aerial_core::RngStream;

use crate::batch::EncodedEpisode;

/// First-in first-out episode store with uniform sampling without
/// replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EncodedEpisode>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn push(&mut self, episode: EncodedEpisode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn can_sample(&self, n: usize) -> bool {
        n > 0 && self.episodes.len() >= n
    }

    /// `n` distinct episodes, in draw order.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<&EncodedEpisode> {
        assert!(self.can_sample(n), "not enough episodes to sample {n}");
        let mut idx: Vec<usize> = (0..self.episodes.len()).collect();
        for k in 0..n {
            let j = k + rng.below(idx.len() - k);
            idx.swap(k, j);
        }
        idx[..n].iter().map(|&i| &self.episodes[i]).collect()
    }
}
