//! Finite MDPs with discrete stochastic rewards.
//!
//! Terminal states have no outgoing outcomes and carry value zero. Every
//! non-terminal `(s, a)` pair owns an [`OutcomeDist`]: a list of successor
//! branches, each with its own discrete [`RewardDist`].

mod buffer;
pub mod text;

pub use buffer::{buffer_sample, ReplayBuffer, Transition};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Probability vectors must sum to one within this tolerance.
pub const PROB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

/// Finite distribution over reward values.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardDist {
    atoms: Vec<(f64, f64)>,
}

impl RewardDist {
    /// Builds a distribution from `(probability, value)` atoms.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("reward distribution has no atoms".into()));
        }
        for &(p, v) in &atoms {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "reward atom probability {p} not in (0, 1]"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidDistribution(format!("reward value {v} is not finite")));
            }
        }
        check_sum(atoms.iter().map(|a| a.0), "reward atoms")?;
        Ok(Self { atoms })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            atoms: vec![(1.0, value)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(p, v)| p * v).sum()
    }

    fn pick(&self, u: f64) -> f64 {
        let idx = pick_index(self.atoms.iter().map(|a| a.0), u);
        self.atoms[idx].1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub prob: f64,
    pub next: StateId,
    pub reward: RewardDist,
}

/// Distribution over `(next state, reward distribution)` branches.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDist {
    branches: Vec<Branch>,
}

impl OutcomeDist {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidDistribution("outcome distribution has no branches".into()));
        }
        for b in &branches {
            if !(b.prob > 0.0 && b.prob <= 1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "branch probability {} not in (0, 1]",
                    b.prob
                )));
            }
        }
        check_sum(branches.iter().map(|b| b.prob), "outcome branches")?;
        Ok(Self { branches })
    }

    /// Single deterministic successor with a deterministic reward.
    pub fn deterministic(next: StateId, reward: f64) -> Self {
        Self {
            branches: vec![Branch {
                prob: 1.0,
                next,
                reward: RewardDist::constant(reward),
            }],
        }
    }

    /// Single deterministic successor with a stochastic reward.
    pub fn to_state(next: StateId, reward: RewardDist) -> Self {
        Self {
            branches: vec![Branch {
                prob: 1.0,
                next,
                reward,
            }],
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn expected_reward(&self) -> f64 {
        self.branches.iter().map(|b| b.prob * b.reward.mean()).sum()
    }
}

fn check_sum(probs: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let total: f64 = probs.sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "{what} sum to {total}, expected 1"
        )));
    }
    Ok(())
}

// Inverse-CDF selection; the last index absorbs round-off.
fn pick_index(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
        last = i;
    }
    last
}

/// Finite MDP with terminal states and a designated initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    outcomes: Vec<Option<OutcomeDist>>,
    terminal: Vec<bool>,
    initial: StateId,
    gamma: f64,
}

impl TabularMdp {
    /// Validates and assembles an MDP.
    ///
    /// With `gamma == 1` the MDP must be absorbing: a terminal state has to
    /// be reachable from every state, and if some deterministic policy can
    /// avoid termination forever, every non-terminal expected reward must be
    /// strictly negative so such policies have unbounded cost.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        terminal: &[StateId],
        initial: StateId,
        gamma: f64,
        outcomes: Vec<((StateId, ActionId), OutcomeDist)>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp("MDP needs at least one state and one action".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("gamma {gamma} not in [0, 1]")));
        }
        if initial.0 >= num_states {
            return Err(Error::Range {
                what: "initial state",
                index: initial.0,
                limit: num_states,
            });
        }
        let mut is_terminal = vec![false; num_states];
        for t in terminal {
            if t.0 >= num_states {
                return Err(Error::Range {
                    what: "terminal state",
                    index: t.0,
                    limit: num_states,
                });
            }
            is_terminal[t.0] = true;
        }
        let mut table: Vec<Option<OutcomeDist>> = vec![None; num_states * num_actions];
        for ((s, a), dist) in outcomes {
            if s.0 >= num_states {
                return Err(Error::Range {
                    what: "state",
                    index: s.0,
                    limit: num_states,
                });
            }
            if a.0 >= num_actions {
                return Err(Error::Range {
                    what: "action",
                    index: a.0,
                    limit: num_actions,
                });
            }
            if is_terminal[s.0] {
                return Err(Error::InvalidMdp(format!("terminal state {} has outcomes", s.0)));
            }
            for b in dist.branches() {
                if b.next.0 >= num_states {
                    return Err(Error::Range {
                        what: "successor state",
                        index: b.next.0,
                        limit: num_states,
                    });
                }
            }
            let slot = &mut table[s.0 * num_actions + a.0];
            if slot.is_some() {
                return Err(Error::InvalidMdp(format!(
                    "duplicate outcomes for ({}, {})",
                    s.0, a.0
                )));
            }
            *slot = Some(dist);
        }
        for s in 0..num_states {
            if is_terminal[s] {
                continue;
            }
            for a in 0..num_actions {
                if table[s * num_actions + a].is_none() {
                    return Err(Error::InvalidMdp(format!("missing outcomes for ({s}, {a})")));
                }
            }
        }
        let mdp = Self {
            num_states,
            num_actions,
            outcomes: table,
            terminal: is_terminal,
            initial,
            gamma,
        };
        if gamma == 1.0 {
            mdp.check_absorbing()?;
        }
        Ok(mdp)
    }

    /// Two states: `s0 --a0, r=1--> s1`, where `s1` is terminal.
    pub fn two_state_probe(gamma: f64) -> Self {
        Self::new(
            2,
            1,
            &[StateId(1)],
            StateId(0),
            gamma,
            vec![((StateId(0), ActionId(0)), OutcomeDist::deterministic(StateId(1), 1.0))],
        )
        .expect("probe MDP is valid")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_state(&self) -> StateId {
        self.initial
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminal.get(s.0).copied().unwrap_or(false)
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(s, _)| StateId(s))
    }

    pub fn non_terminal_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter(|(_, &t)| !t)
            .map(|(s, _)| StateId(s))
    }

    /// Same MDP with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let outcomes = self
            .non_terminal_states()
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, ActionId(a))))
            .map(|(s, a)| ((s, a), self.outcomes[s.0 * self.num_actions + a.0].clone().unwrap()))
            .collect();
        let terminal: Vec<StateId> = self.terminal_states().collect();
        Self::new(self.num_states, self.num_actions, &terminal, self.initial, gamma, outcomes)
    }

    fn check_ids(&self, s: StateId, a: ActionId) -> Result<()> {
        if s.0 >= self.num_states {
            return Err(Error::Range {
                what: "state",
                index: s.0,
                limit: self.num_states,
            });
        }
        if a.0 >= self.num_actions {
            return Err(Error::Range {
                what: "action",
                index: a.0,
                limit: self.num_actions,
            });
        }
        if self.terminal[s.0] {
            return Err(Error::Precondition(format!("state {} is terminal", s.0)));
        }
        Ok(())
    }

    /// Outcome distribution of a non-terminal pair.
    pub fn outcomes(&self, s: StateId, a: ActionId) -> Result<&OutcomeDist> {
        self.check_ids(s, a)?;
        Ok(self.outcome_unchecked(s.0, a.0))
    }

    pub(crate) fn outcome_unchecked(&self, s: usize, a: usize) -> &OutcomeDist {
        self.outcomes[s * self.num_actions + a]
            .as_ref()
            .expect("non-terminal pair has outcomes")
    }

    /// Expected immediate reward of `(s, a)`.
    pub fn expected_reward(&self, s: StateId, a: ActionId) -> Result<f64> {
        Ok(self.outcomes(s, a)?.expected_reward())
    }

    /// Samples one transition.
    ///
    /// Consumes exactly two uniform draws from `rng`: the first selects the
    /// branch, the second selects the reward atom of that branch.
    pub fn sample_step(&self, s: StateId, a: ActionId, rng: &mut Rng) -> Result<Transition> {
        let dist = self.outcomes(s, a)?;
        let u_branch: f64 = rng.random();
        let u_reward: f64 = rng.random();
        let branch = &dist.branches[pick_index(dist.branches.iter().map(|b| b.prob), u_branch)];
        let r = branch.reward.pick(u_reward);
        Ok(Transition {
            s,
            a,
            r,
            s_next: branch.next,
            done: self.terminal[branch.next.0],
        })
    }

    /// States from which some action sequence reaches a terminal state
    /// with positive probability.
    fn can_reach_terminal(&self) -> Vec<bool> {
        let mut reach = self.terminal.clone();
        loop {
            let mut changed = false;
            for s in 0..self.num_states {
                if reach[s] {
                    continue;
                }
                let hit = (0..self.num_actions).any(|a| {
                    self.outcome_unchecked(s, a)
                        .branches
                        .iter()
                        .any(|b| reach[b.next.0])
                });
                if hit {
                    reach[s] = true;
                    changed = true;
                }
            }
            if !changed {
                return reach;
            }
        }
    }

    /// Largest set of non-terminal states that some deterministic policy
    /// can stay inside forever (every state has an action whose whole
    /// support lies in the set).
    fn trapping_set(&self) -> Vec<bool> {
        let mut inside: Vec<bool> = self.terminal.iter().map(|t| !t).collect();
        loop {
            let mut changed = false;
            for s in 0..self.num_states {
                if !inside[s] {
                    continue;
                }
                let closed = (0..self.num_actions).any(|a| {
                    self.outcome_unchecked(s, a)
                        .branches
                        .iter()
                        .all(|b| inside[b.next.0])
                });
                if !closed {
                    inside[s] = false;
                    changed = true;
                }
            }
            if !changed {
                return inside;
            }
        }
    }

    fn check_absorbing(&self) -> Result<()> {
        let reach = self.can_reach_terminal();
        if let Some(s) = reach.iter().position(|r| !r) {
            return Err(Error::InvalidMdp(format!(
                "gamma = 1 but no terminal state is reachable from state {s}"
            )));
        }
        if self.trapping_set().iter().any(|&t| t) {
            for s in self.non_terminal_states() {
                for a in 0..self.num_actions {
                    let r = self.outcome_unchecked(s.0, a).expected_reward();
                    if r >= 0.0 {
                        return Err(Error::InvalidMdp(format!(
                            "gamma = 1 with a non-terminating policy requires negative rewards; \
                             ({}, {a}) has expected reward {r}",
                            s.0
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// True if following `policy` from any non-terminal state terminates
    /// with probability one.
    pub fn policy_is_proper(&self, policy: &[ActionId]) -> bool {
        let mut reach = self.terminal.clone();
        loop {
            let mut changed = false;
            for s in 0..self.num_states {
                if reach[s] {
                    continue;
                }
                if self
                    .outcome_unchecked(s, policy[s].0)
                    .branches
                    .iter()
                    .any(|b| reach[b.next.0])
                {
                    reach[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        // Every state reachable under the policy must itself reach a terminal.
        reach.iter().all(|&r| r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn probe_sample_step() {
        let mdp = TabularMdp::two_state_probe(0.9);
        let mut rng = seeded(1);
        let t = mdp.sample_step(StateId(0), ActionId(0), &mut rng).unwrap();
        assert_eq!(
            t,
            Transition {
                s: StateId(0),
                a: ActionId(0),
                r: 1.0,
                s_next: StateId(1),
                done: true
            }
        );
        assert_eq!(mdp.expected_reward(StateId(0), ActionId(0)).unwrap(), 1.0);
    }

    #[test]
    fn terminal_and_range_errors() {
        let mdp = TabularMdp::two_state_probe(1.0);
        let mut rng = seeded(1);
        assert!(matches!(
            mdp.sample_step(StateId(1), ActionId(0), &mut rng),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            mdp.sample_step(StateId(5), ActionId(0), &mut rng),
            Err(Error::Range { .. })
        ));
        assert!(matches!(
            mdp.expected_reward(StateId(0), ActionId(3)),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(RewardDist::new(vec![(0.5, 1.0), (0.4, 0.0)]).is_err());
        assert!(RewardDist::new(vec![]).is_err());
        assert!(RewardDist::new(vec![(1.0, f64::NAN)]).is_err());
        let b = |p| Branch {
            prob: p,
            next: StateId(0),
            reward: RewardDist::constant(0.0),
        };
        assert!(OutcomeDist::new(vec![b(0.7), b(0.3 + 1e-9)]).is_err());
        assert!(OutcomeDist::new(vec![b(0.7), b(0.3)]).is_ok());
    }

    #[test]
    fn rejects_malformed_tables() {
        let det = |n| OutcomeDist::deterministic(StateId(n), -1.0);
        // terminal with outcomes
        assert!(TabularMdp::new(
            2,
            1,
            &[StateId(1)],
            StateId(0),
            0.9,
            vec![
                ((StateId(0), ActionId(0)), det(1)),
                ((StateId(1), ActionId(0)), det(1))
            ]
        )
        .is_err());
        // missing pair
        assert!(TabularMdp::new(2, 2, &[StateId(1)], StateId(0), 0.9, vec![((StateId(0), ActionId(0)), det(1))]).is_err());
        // successor out of range
        assert!(TabularMdp::new(2, 1, &[StateId(1)], StateId(0), 0.9, vec![((StateId(0), ActionId(0)), det(7))]).is_err());
    }

    #[test]
    fn gamma_one_requires_absorbing() {
        // s0 loops on itself with positive reward: rejected at gamma=1.
        let looping = vec![
            ((StateId(0), ActionId(0)), OutcomeDist::deterministic(StateId(0), 1.0)),
            ((StateId(0), ActionId(1)), OutcomeDist::deterministic(StateId(1), 1.0)),
        ];
        assert!(TabularMdp::new(2, 2, &[StateId(1)], StateId(0), 1.0, looping.clone()).is_err());
        assert!(TabularMdp::new(2, 2, &[StateId(1)], StateId(0), 0.9, looping).is_ok());
        // Same loop with negative rewards is a valid shortest-path problem.
        let costly = vec![
            ((StateId(0), ActionId(0)), OutcomeDist::deterministic(StateId(0), -1.0)),
            ((StateId(0), ActionId(1)), OutcomeDist::deterministic(StateId(1), -1.0)),
        ];
        assert!(TabularMdp::new(2, 2, &[StateId(1)], StateId(0), 1.0, costly).is_ok());
        // No terminal reachable.
        let stuck = vec![((StateId(0), ActionId(0)), OutcomeDist::deterministic(StateId(0), -1.0))];
        assert!(TabularMdp::new(2, 1, &[StateId(1)], StateId(0), 1.0, stuck).is_err());
    }

    #[test]
    fn marginal_frequencies_match_outcomes() {
        let reward = RewardDist::new(vec![(0.25, 1.0), (0.75, -1.0)]).unwrap();
        let dist = OutcomeDist::new(vec![
            Branch {
                prob: 0.3,
                next: StateId(1),
                reward: reward.clone(),
            },
            Branch {
                prob: 0.7,
                next: StateId(2),
                reward: RewardDist::constant(5.0),
            },
        ])
        .unwrap();
        let mdp = TabularMdp::new(
            3,
            1,
            &[StateId(1), StateId(2)],
            StateId(0),
            0.9,
            vec![((StateId(0), ActionId(0)), dist)],
        )
        .unwrap();
        let mut rng = seeded(11);
        let n = 100_000;
        let (mut to1, mut plus) = (0usize, 0usize);
        for _ in 0..n {
            let t = mdp.sample_step(StateId(0), ActionId(0), &mut rng).unwrap();
            if t.s_next == StateId(1) {
                to1 += 1;
                if t.r == 1.0 {
                    plus += 1;
                }
            } else {
                assert_eq!(t.r, 5.0);
            }
        }
        let check = |count: usize, total: usize, p: f64| {
            let sigma = (p * (1.0 - p) / total as f64).sqrt();
            let freq = count as f64 / total as f64;
            assert!((freq - p).abs() < 5.0 * sigma, "freq {freq} vs {p}");
        };
        check(to1, n, 0.3);
        check(plus, to1, 0.25);
    }

    #[test]
    fn policy_properness() {
        let mdp = crate::chain::make_deterministic_chain(10).unwrap();
        let all_b = vec![ActionId(1); 10];
        assert!(!mdp.policy_is_proper(&all_b));
        let all_a = vec![ActionId(0); 10];
        assert!(mdp.policy_is_proper(&all_a));
    }
}
