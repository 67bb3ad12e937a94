use std::ops::Range;

use rand::Rng as _;

use super::{ActionId, StateId};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: StateId,
    pub a: ActionId,
    pub r: f64,
    pub s_next: StateId,
    pub done: bool,
}

/// Episode-structured experience store.
///
/// Within an episode, consecutive records chain: `s_next` of record `i`
/// equals `s` of record `i + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    transitions: Vec<Transition>,
    episode_starts: Vec<usize>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks the next pushed transition as the first of a new episode.
    /// Calling it twice without pushing in between is a no-op.
    pub fn start_episode(&mut self) {
        if self.episode_starts.last() != Some(&self.transitions.len()) {
            self.episode_starts.push(self.transitions.len());
        }
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if self.episode_starts.is_empty() {
            self.episode_starts.push(0);
        }
        let episode_start = *self.episode_starts.last().unwrap();
        if self.transitions.len() > episode_start {
            let prev = self.transitions.last().unwrap();
            if prev.done {
                return Err(Error::Precondition(
                    "episode already ended; call start_episode first".into(),
                ));
            }
            if prev.s_next != t.s {
                return Err(Error::Precondition(format!(
                    "transition starts at state {} but previous ended at {}",
                    t.s.0, prev.s_next.0
                )));
            }
        }
        self.transitions.push(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.transitions.get(index)
    }

    pub fn episode_starts(&self) -> &[usize] {
        &self.episode_starts
    }

    pub fn num_episodes(&self) -> usize {
        self.episode_starts
            .iter()
            .filter(|&&s| s < self.transitions.len())
            .count()
    }

    /// Index range of the episode containing record `index`.
    pub fn episode_range(&self, index: usize) -> Range<usize> {
        let k = self.episode_starts.partition_point(|&st| st <= index) - 1;
        let end = self
            .episode_starts
            .get(k + 1)
            .copied()
            .unwrap_or(self.transitions.len());
        self.episode_starts[k]..end
    }

    /// Up to `n` consecutive records starting at `index`, cut at the
    /// episode end.
    pub fn window(&self, index: usize, n: usize) -> &[Transition] {
        let end = self.episode_range(index).end.min(index + n);
        &self.transitions[index..end]
    }

    pub fn episodes(&self) -> impl Iterator<Item = &[Transition]> + '_ {
        self.episode_starts
            .iter()
            .enumerate()
            .map(move |(k, &st)| {
                let end = self
                    .episode_starts
                    .get(k + 1)
                    .copied()
                    .unwrap_or(self.transitions.len());
                &self.transitions[st..end]
            })
            .filter(|ep| !ep.is_empty())
    }

    /// Uniform index in `0..len`.
    pub fn sample_index(&self, rng: &mut Rng) -> Result<usize> {
        if self.transitions.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok(rng.random_range(0..self.transitions.len()))
    }
}

/// Draws `m` transitions uniformly with replacement.
pub fn buffer_sample(buffer: &ReplayBuffer, m: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
    if m == 0 {
        return Err(Error::Precondition("minibatch size must be at least 1".into()));
    }
    (0..m)
        .map(|_| buffer.sample_index(rng).map(|i| buffer.transitions[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn t(s: usize, s_next: usize, done: bool) -> Transition {
        Transition {
            s: StateId(s),
            a: ActionId(0),
            r: -1.0,
            s_next: StateId(s_next),
            done,
        }
    }

    #[test]
    fn single_transition_sampled_repeatedly() {
        let mut buf = ReplayBuffer::new();
        buf.push(t(0, 1, true)).unwrap();
        let out = buffer_sample(&buf, 3, &mut seeded(0)).unwrap();
        assert_eq!(out, vec![t(0, 1, true); 3]);
    }

    #[test]
    fn empty_buffer_errors() {
        let buf = ReplayBuffer::new();
        assert!(matches!(buffer_sample(&buf, 1, &mut seeded(0)), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn same_seed_same_indices() {
        let mut buf = ReplayBuffer::new();
        for i in 0..10 {
            buf.push(t(i, i + 1, false)).unwrap();
        }
        let a = buffer_sample(&buf, 50, &mut seeded(9)).unwrap();
        let b = buffer_sample(&buf, 50, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_index_frequencies() {
        let mut buf = ReplayBuffer::new();
        for i in 0..10 {
            buf.push(t(i, i + 1, false)).unwrap();
        }
        let mut rng = seeded(3);
        let mut counts = [0usize; 10];
        let draws = 1_000_000;
        for _ in 0..draws {
            counts[buf.sample_index(&mut rng).unwrap()] += 1;
        }
        let mut chi2 = 0.0;
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.005, "freq {freq}");
            let e = draws as f64 / 10.0;
            chi2 += (c as f64 - e).powi(2) / e;
        }
        // 9 degrees of freedom, 99.9% quantile is 27.88.
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }

    #[test]
    fn chaining_enforced() {
        let mut buf = ReplayBuffer::new();
        buf.push(t(0, 1, false)).unwrap();
        assert!(buf.push(t(2, 3, false)).is_err());
        buf.push(t(1, 2, true)).unwrap();
        assert!(buf.push(t(2, 3, false)).is_err());
        buf.start_episode();
        buf.push(t(5, 6, false)).unwrap();
        assert_eq!(buf.episode_starts(), &[0, 2]);
        assert_eq!(buf.episode_range(1), 0..2);
        assert_eq!(buf.episode_range(2), 2..3);
        assert_eq!(buf.window(0, 4).len(), 2);
        assert_eq!(buf.window(2, 4).len(), 1);
        assert_eq!(buf.num_episodes(), 2);
    }
}
