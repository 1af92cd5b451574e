//! Episodic replay buffer with reservoir retention.
//!
//! Behavior quantities (log-probs, per-step distributions, value
//! predictions) are recorded at rollout time and never recomputed; the
//! buffer stores them verbatim. Reservoir decisions are derived from the
//! run seed and the insertion counter, so a reloaded buffer continues the
//! exact same retention sequence.

use dialogue_env::DialogueState;
use policies::ActionRecord;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub state: DialogueState,
    pub action: ActionRecord,
    pub reward: f64,
    /// Critic prediction at rollout time (the replay value target).
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub task: String,
    pub dialogue_index: u64,
    pub success: bool,
    pub total_return: f64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Exactly one terminal transition, at the end.
    pub fn validate(&self) -> bool {
        !self.transitions.is_empty()
            && self.transitions.iter().filter(|t| t.done).count() == 1
            && self.transitions.last().map(|t| t.done) == Some(true)
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    seed: u64,
    storage: Vec<Episode>,
    seen: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity >= 1);
        Self { capacity, seed, storage: Vec::new(), seen: 0 }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_seen(&self) -> u64 {
        self.seen
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.storage
    }

    /// Reservoir insert: the first `capacity` episodes are kept; afterwards
    /// the new episode replaces a uniformly random slot with probability
    /// `capacity / total_seen`, giving every episode ever seen an equal
    /// retention probability.
    pub fn insert(&mut self, episode: Episode) {
        debug_assert!(episode.validate(), "episodes end with exactly one terminal transition");
        self.seen += 1;
        if self.storage.len() < self.capacity {
            self.storage.push(episode);
            return;
        }
        let mut rng = nn_core::rng::stream(self.seed, "reservoir", &[self.seen]);
        let j = rng.gen_range(0..self.seen);
        if (j as usize) < self.capacity {
            self.storage[j as usize] = episode;
        }
    }

    /// Uniform sample without replacement (all of the buffer when it holds
    /// fewer than `n` episodes). Order is the draw order.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<&Episode> {
        let take = n.min(self.storage.len());
        let mut idx: Vec<usize> = (0..self.storage.len()).collect();
        for i in 0..take {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        idx.truncate(take);
        idx.into_iter().map(|i| &self.storage[i]).collect()
    }

    /// Rebuilds a buffer from persisted episodes and its insertion counter.
    pub fn restore(capacity: usize, seed: u64, episodes: Vec<Episode>, seen: u64) -> Self {
        assert!(episodes.len() <= capacity);
        Self { capacity, seed, storage: episodes, seen }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use policies::ActionRecord;

    fn episode(i: u64) -> Episode {
        Episode {
            transitions: vec![Transition {
                state: DialogueState::default(),
                action: ActionRecord { tuples: vec![], stopped: true, log_prob: -0.1, steps: vec![] },
                reward: 0.0,
                value: 0.0,
                done: true,
            }],
            task: "t".into(),
            dialogue_index: i,
            success: false,
            total_return: 0.0,
        }
    }

    #[test]
    fn first_capacity_episodes_all_retained() {
        let mut buf = ReplayBuffer::new(10, 0);
        for i in 0..10 {
            buf.insert(episode(i));
        }
        assert_eq!(buf.len(), 10);
        let kept: Vec<u64> = buf.episodes().iter().map(|e| e.dialogue_index).collect();
        assert_eq!(kept, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn inclusion_probability_matches_reservoir_bound() {
        // capacity 100, 2000 inserts, 200 seeded trials: the empirical
        // inclusion frequency of probe episodes stays within 3 sigma of
        // 100/2000 = 0.05
        let capacity = 100;
        let inserts = 2000u64;
        let trials = 200;
        let p = capacity as f64 / inserts as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        for probe in [0u64, 999, 1999] {
            let mut hits = 0;
            for trial in 0..trials {
                let mut buf = ReplayBuffer::new(capacity, 1000 + trial);
                for i in 0..inserts {
                    buf.insert(episode(i));
                }
                if buf.episodes().iter().any(|e| e.dialogue_index == probe) {
                    hits += 1;
                }
            }
            let freq = hits as f64 / trials as f64;
            assert!(
                (freq - p).abs() < 3.0 * sigma,
                "probe {probe}: frequency {freq} vs expected {p} (3 sigma {})",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut buf = ReplayBuffer::new(50, 3);
        for i in 0..50 {
            buf.insert(episode(i));
        }
        let mut rng = nn_core::rng::stream(9, "sample", &[]);
        let s = buf.sample(20, &mut rng);
        let mut ids: Vec<u64> = s.iter().map(|e| e.dialogue_index).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 20);
        // asking for more than stored returns everything
        let s = buf.sample(500, &mut rng);
        assert_eq!(s.len(), 50);
    }

    #[test]
    fn restore_continues_the_same_retention_stream() {
        let run = |split: Option<u64>| {
            let mut buf = ReplayBuffer::new(5, 77);
            for i in 0..40 {
                if Some(i) == split {
                    let episodes = buf.episodes().to_vec();
                    let seen = buf.total_seen();
                    buf = ReplayBuffer::restore(5, 77, episodes, seen);
                }
                buf.insert(episode(i));
            }
            buf.episodes().iter().map(|e| e.dialogue_index).collect::<Vec<_>>()
        };
        assert_eq!(run(None), run(Some(20)));
    }
}
