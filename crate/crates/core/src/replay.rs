//! Episode-granular replay storage.
//!
//! Whole episodes are kept intact so recurrent networks can be unrolled over
//! them. Sampled episodes are padded to the longest one in the batch and laid
//! out time-major (row `t * batch + b`), with a validity mask.

use std::collections::VecDeque;

use rand::Rng;

use crate::{Error, Result};

/// One rollout. `obs` holds `len + 1` joint observations: the observation
/// before every step plus the one after the last step.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// `[len + 1][agent][feature]`
    pub obs: Vec<Vec<Vec<f64>>>,
    /// `[len][agent]`
    pub actions: Vec<Vec<usize>>,
    /// Team reward per step.
    pub rewards: Vec<f64>,
    /// True terminal flag per step; only the last step may be set.
    pub terminated: Vec<bool>,
}

impl Episode {
    pub fn new(first_obs: Vec<Vec<f64>>) -> Self {
        Episode {
            obs: vec![first_obs],
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: Vec::new(),
        }
    }

    pub fn record(&mut self, actions: Vec<usize>, reward: f64, terminated: bool, next_obs: Vec<Vec<f64>>) {
        self.actions.push(actions);
        self.rewards.push(reward);
        self.terminated.push(terminated);
        self.obs.push(next_obs);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.obs.first().map_or(0, Vec::len)
    }

    pub fn obs_dim(&self) -> usize {
        self.obs
            .first()
            .and_then(|o| o.first())
            .map_or(0, Vec::len)
    }

    /// Undiscounted sum of team rewards.
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.len();
        let bad = |m: String| Err(Error::Replay(format!("malformed episode: {m}")));
        if len == 0 {
            return bad("no steps".into());
        }
        if self.rewards.len() != len || self.terminated.len() != len || self.obs.len() != len + 1 {
            return bad(format!(
                "{} actions, {} rewards, {} flags, {} observations",
                len,
                self.rewards.len(),
                self.terminated.len(),
                self.obs.len()
            ));
        }
        if self.terminated[..len - 1].iter().any(|&t| t) {
            return bad("terminal flag before the last step".into());
        }
        let (n, d) = (self.n_agents(), self.obs_dim());
        if n == 0 || d == 0 {
            return bad("empty observation".into());
        }
        if self.obs.iter().any(|o| o.len() != n || o.iter().any(|x| x.len() != d)) {
            return bad("inconsistent observation widths".into());
        }
        if self.actions.iter().any(|a| a.len() != n) {
            return bad("inconsistent joint action width".into());
        }
        Ok(())
    }
}

/// Padded, time-major batch of episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeBatch {
    pub batch: usize,
    pub max_len: usize,
    pub n_agents: usize,
    pub obs_dim: usize,
    /// Per agent: `[(max_len + 1) · batch, obs_dim]`, zero-padded.
    pub obs: Vec<Vec<f64>>,
    /// Per agent: `[max_len · batch]`, padded with 0.
    pub actions: Vec<Vec<usize>>,
    /// `[max_len · batch]`
    pub rewards: Vec<f64>,
    /// `[max_len · batch]`, 1 at true terminal steps.
    pub terminated: Vec<f64>,
    /// `[max_len · batch]`, 1 on real steps, 0 on padding.
    pub mask: Vec<f64>,
}

impl EpisodeBatch {
    pub fn from_episodes(episodes: &[&Episode]) -> Result<Self> {
        let first = episodes
            .first()
            .ok_or_else(|| Error::Replay("empty batch".into()))?;
        let (n_agents, obs_dim) = (first.n_agents(), first.obs_dim());
        for e in episodes {
            e.validate()?;
            if e.n_agents() != n_agents || e.obs_dim() != obs_dim {
                return Err(Error::Replay("episodes with different shapes in one batch".into()));
            }
        }
        let batch = episodes.len();
        let max_len = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        let mut obs = vec![vec![0.0; (max_len + 1) * batch * obs_dim]; n_agents];
        let mut actions = vec![vec![0; max_len * batch]; n_agents];
        let mut rewards = vec![0.0; max_len * batch];
        let mut terminated = vec![0.0; max_len * batch];
        let mut mask = vec![0.0; max_len * batch];
        for (b, e) in episodes.iter().enumerate() {
            for (t, joint) in e.obs.iter().enumerate() {
                let row = (t * batch + b) * obs_dim;
                for (i, o) in joint.iter().enumerate() {
                    obs[i][row..row + obs_dim].copy_from_slice(o);
                }
            }
            for t in 0..e.len() {
                let k = t * batch + b;
                for i in 0..n_agents {
                    actions[i][k] = e.actions[t][i];
                }
                rewards[k] = e.rewards[t];
                terminated[k] = if e.terminated[t] { 1.0 } else { 0.0 };
                mask[k] = 1.0;
            }
        }
        Ok(EpisodeBatch {
            batch,
            max_len,
            n_agents,
            obs_dim,
            obs,
            actions,
            rewards,
            terminated,
            mask,
        })
    }

    /// Number of valid steps of sequence `b`.
    pub fn valid_steps(&self, b: usize) -> usize {
        (0..self.max_len)
            .filter(|t| self.mask[t * self.batch + b] > 0.0)
            .count()
    }
}

/// FIFO buffer of whole episodes.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<(u64, Episode)>,
    inserted: u64,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 5000;

    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Replay("capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: VecDeque::with_capacity(capacity.min(1 << 16)),
            inserted: 0,
        })
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

    /// Total number of episodes ever pushed.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Insertion ids of the stored episodes, oldest first.
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.storage.iter().map(|(id, _)| *id)
    }

    pub fn get(&self, index: usize) -> Option<&Episode> {
        self.storage.get(index).map(|(_, e)| e)
    }

    pub fn push(&mut self, episode: Episode) -> Result<()> {
        episode.validate()?;
        if let Some((_, front)) = self.storage.front() {
            if front.n_agents() != episode.n_agents() || front.obs_dim() != episode.obs_dim() {
                return Err(Error::Replay("episode shape differs from stored episodes".into()));
            }
        }
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back((self.inserted, episode));
        self.inserted += 1;
        Ok(())
    }

    /// Distinct positions drawn uniformly without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch_size == 0 || self.storage.len() < batch_size {
            return Err(Error::Replay(format!(
                "cannot sample {} episodes from {}",
                batch_size,
                self.storage.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.storage.len(), batch_size).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<EpisodeBatch> {
        let idx = self.sample_indices(batch_size, rng)?;
        let eps: Vec<&Episode> = idx.iter().map(|&i| &self.storage[i].1).collect();
        EpisodeBatch::from_episodes(&eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn episode(len: usize, tag: f64) -> Episode {
        let mut e = Episode::new(vec![vec![tag, 0.0]]);
        for t in 0..len {
            e.record(vec![t % 2], 1.0, t + 1 == len, vec![vec![tag, t as f64 + 1.0]]);
        }
        e
    }

    #[test]
    fn overflow_evicts_oldest() {
        let mut buf = ReplayBuffer::new(5000).unwrap();
        for i in 0..5001 {
            buf.push(episode(1, i as f64)).unwrap();
        }
        assert_eq!(buf.len(), 5000);
        assert_eq!(buf.ids().next(), Some(1));
        assert_eq!(buf.get(0).unwrap().obs[0][0][0], 1.0);
    }

    #[test]
    fn eviction_order_matches_insertion() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..6 {
            buf.push(episode(1, i as f64)).unwrap();
        }
        assert_eq!(buf.ids().collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn padding_and_mask() {
        let (a, b) = (episode(3, 0.0), episode(5, 1.0));
        let batch = EpisodeBatch::from_episodes(&[&a, &b]).unwrap();
        assert_eq!(batch.max_len, 5);
        assert_eq!(batch.valid_steps(0), 3);
        assert_eq!(batch.valid_steps(1), 5);
        assert_eq!(batch.obs[0].len(), 6 * 2 * 2);
        // padded observation rows are zero
        let row = (5 * 2) * 2;
        assert_eq!(&batch.obs[0][row..row + 2], &[0.0, 0.0]);
        assert_eq!(batch.terminated[2 * 2], 1.0);
    }

    #[test]
    fn sampling_is_distinct_and_seeded() {
        let mut buf = ReplayBuffer::new(200).unwrap();
        for i in 0..100 {
            buf.push(episode(2, i as f64)).unwrap();
        }
        let idx = buf.sample_indices(32, &mut seeded(4)).unwrap();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 32);
        assert_eq!(idx, buf.sample_indices(32, &mut seeded(4)).unwrap());
        assert!(buf.sample(101, &mut seeded(0)).is_err());
    }

    #[test]
    fn malformed_episode_rejected() {
        let mut e = episode(3, 0.0);
        e.terminated[0] = true;
        let mut buf = ReplayBuffer::new(2).unwrap();
        assert!(buf.push(e).is_err());
        assert!(buf.push(Episode::new(vec![vec![0.0]])).is_err());
    }
}
