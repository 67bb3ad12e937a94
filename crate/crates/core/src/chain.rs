//! Benchmark chain MDPs and fixed-batch generation.
//!
//! Deterministic chain (actions `a`, `b`, `c`), states `s_0..s_{K-1}`:
//!
//! * `a`: `s_i -> s_{i+1}` with reward -1, except `s_{K-3} -> s_{K-2}` with -100
//! * `b`: `s_i -> s_{i-1}` with reward -2, self-loop at `s_0`
//! * `c`: `s_i -> s_{i+2}` with reward -3, except `s_{K-4} -> s_{K-2}` with -30
//!   and `s_{K-3} -> s_{K-1}` with -3
//!
//! `s_{K-2}` (bad) and `s_{K-1}` (goal) are terminal. The optimal policy is
//! `a` everywhere except `c` at `s_{K-3}`.
//!
//! Stochastic chain (actions `a`, `b`): every action moves one state to the
//! right. `a` pays -1 w.p. 0.8 and 0 w.p. 0.2; `b` pays +1 w.p. 0.99 and
//! -200 w.p. 0.01. `s_{K-1}` is terminal and the chain is undiscounted.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, OutcomeDist, ReplayBuffer, RewardDist, StateId, TabularMdp};
use crate::rng::Rng;

pub const ACTION_A: ActionId = ActionId(0);
pub const ACTION_B: ActionId = ActionId(1);
pub const ACTION_C: ActionId = ActionId(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainVariant {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainSpec {
    pub horizon_k: usize,
    pub variant: ChainVariant,
}

impl ChainSpec {
    pub fn build(&self, gamma: f64) -> Result<TabularMdp> {
        match self.variant {
            ChainVariant::Deterministic => make_deterministic_chain_with_gamma(self.horizon_k, gamma),
            ChainVariant::Stochastic => make_stochastic_chain_with_gamma(self.horizon_k, gamma),
        }
    }

    /// Optimal policy of the chain, independent of the discount.
    pub fn optimal_policy(&self) -> Vec<ActionId> {
        let k = self.horizon_k;
        match self.variant {
            ChainVariant::Deterministic => (0..k)
                .map(|i| if i == k - 3 { ACTION_C } else { ACTION_A })
                .collect(),
            ChainVariant::Stochastic => vec![ACTION_A; k],
        }
    }
}

/// Deterministic chain with `gamma = 1`.
pub fn make_deterministic_chain(k: usize) -> Result<TabularMdp> {
    make_deterministic_chain_with_gamma(k, 1.0)
}

pub fn make_deterministic_chain_with_gamma(k: usize, gamma: f64) -> Result<TabularMdp> {
    if k < 6 {
        return Err(Error::Config(format!("deterministic chain needs K >= 6, got {k}")));
    }
    let det = |next: usize, r: f64| OutcomeDist::deterministic(StateId(next), r);
    let mut outcomes = Vec::with_capacity(3 * (k - 2));
    for i in 0..=k - 3 {
        let s = StateId(i);
        let a = if i <= k - 4 { det(i + 1, -1.0) } else { det(k - 2, -100.0) };
        let b = det(i.saturating_sub(1), -2.0);
        let c = if i <= k - 5 {
            det(i + 2, -3.0)
        } else if i == k - 4 {
            det(k - 2, -30.0)
        } else {
            det(k - 1, -3.0)
        };
        outcomes.push(((s, ACTION_A), a));
        outcomes.push(((s, ACTION_B), b));
        outcomes.push(((s, ACTION_C), c));
    }
    TabularMdp::new(k, 3, &[StateId(k - 2), StateId(k - 1)], StateId(0), gamma, outcomes)
}

/// Stochastic chain with `gamma = 1`.
pub fn make_stochastic_chain(k: usize) -> Result<TabularMdp> {
    make_stochastic_chain_with_gamma(k, 1.0)
}

pub fn make_stochastic_chain_with_gamma(k: usize, gamma: f64) -> Result<TabularMdp> {
    if k < 2 {
        return Err(Error::Config(format!("stochastic chain needs K >= 2, got {k}")));
    }
    let reward_a = RewardDist::new(vec![(0.8, -1.0), (0.2, 0.0)])?;
    let reward_b = RewardDist::new(vec![(0.99, 1.0), (0.01, -200.0)])?;
    let mut outcomes = Vec::with_capacity(2 * (k - 1));
    for i in 0..k - 1 {
        let next = StateId(i + 1);
        outcomes.push(((StateId(i), ACTION_A), OutcomeDist::to_state(next, reward_a.clone())));
        outcomes.push(((StateId(i), ACTION_B), OutcomeDist::to_state(next, reward_b.clone())));
    }
    TabularMdp::new(k, 2, &[StateId(k - 1)], StateId(0), gamma, outcomes)
}

/// Generates a fixed batch of episodes around a reference policy.
///
/// Every episode starts at the initial state and runs until a terminal
/// state or `10 * num_states` steps. At each step one uniform draw decides
/// whether to deviate (probability `nonoptimal_frac`); a deviation draws a
/// second index uniformly among the other actions. States with a single
/// action always use it. The transition itself then consumes the two draws
/// of [`TabularMdp::sample_step`].
pub fn generate_batch(
    mdp: &TabularMdp,
    episodes: usize,
    nonoptimal_frac: f64,
    optimal: &[ActionId],
    rng: &mut Rng,
) -> Result<ReplayBuffer> {
    if episodes == 0 {
        return Err(Error::Config("batch needs at least one episode".into()));
    }
    if !(0.0..=1.0).contains(&nonoptimal_frac) {
        return Err(Error::Config(format!("nonoptimal_frac {nonoptimal_frac} not in [0, 1]")));
    }
    if optimal.len() != mdp.num_states() {
        return Err(Error::Shape {
            expected: mdp.num_states(),
            got: optimal.len(),
        });
    }
    let cap = 10 * mdp.num_states();
    let num_actions = mdp.num_actions();
    let mut buffer = ReplayBuffer::new();
    for _ in 0..episodes {
        buffer.start_episode();
        let mut s = mdp.initial_state();
        for _ in 0..cap {
            if mdp.is_terminal(s) {
                break;
            }
            let best = optimal[s.0];
            let deviate: f64 = rng.random();
            let a = if deviate < nonoptimal_frac && num_actions > 1 {
                let j = rng.random_range(0..num_actions - 1);
                ActionId(if j >= best.0 { j + 1 } else { j })
            } else {
                best
            };
            let t = mdp.sample_step(s, a, rng)?;
            buffer.push(t)?;
            s = t.s_next;
        }
    }
    Ok(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn det_spec(k: usize) -> ChainSpec {
        ChainSpec {
            horizon_k: k,
            variant: ChainVariant::Deterministic,
        }
    }

    #[test]
    fn deterministic_chain_edges() {
        for k in [6, 7, 20] {
            let mdp = make_deterministic_chain(k).unwrap();
            let edge = |i: usize, a: ActionId| {
                let b = &mdp.outcomes(StateId(i), a).unwrap().branches()[0];
                (b.next.0, b.reward.mean())
            };
            assert_eq!(edge(k - 3, ACTION_A), (k - 2, -100.0));
            assert_eq!(edge(k - 3, ACTION_C), (k - 1, -3.0));
            assert_eq!(edge(k - 4, ACTION_C), (k - 2, -30.0));
            assert_eq!(edge(0, ACTION_B), (0, -2.0));
            assert_eq!(edge(0, ACTION_C), (2, -3.0));
            assert_eq!(edge(1, ACTION_B), (0, -2.0));
            assert!(mdp.is_terminal(StateId(k - 1)) && mdp.is_terminal(StateId(k - 2)));
        }
        assert!(matches!(make_deterministic_chain(5), Err(Error::Config(_))));
    }

    #[test]
    fn red_path_rewards_k20() {
        let mdp = make_deterministic_chain(20).unwrap();
        let policy = det_spec(20).optimal_policy();
        let mut s = mdp.initial_state();
        let mut rewards = vec![];
        let mut rng = seeded(0);
        while !mdp.is_terminal(s) {
            let t = mdp.sample_step(s, policy[s.0], &mut rng).unwrap();
            rewards.push(t.r);
            s = t.s_next;
        }
        let mut expected = vec![-1.0; 17];
        expected.push(-3.0);
        assert_eq!(rewards, expected);
        assert_eq!(s, StateId(19));
    }

    #[test]
    fn stochastic_chain_expected_rewards() {
        let mdp = make_stochastic_chain(10).unwrap();
        for i in 0..9 {
            assert!((mdp.expected_reward(StateId(i), ACTION_A).unwrap() + 0.8).abs() < 1e-12);
            assert!((mdp.expected_reward(StateId(i), ACTION_B).unwrap() + 1.01).abs() < 1e-12);
        }
        assert_eq!(mdp.gamma(), 1.0);
        assert!(make_stochastic_chain(1).is_err());
    }

    #[test]
    fn stochastic_chain_empirical_rewards() {
        let mdp = make_stochastic_chain(3).unwrap();
        let mut rng = seeded(5);
        let n = 100_000;
        let mean_a: f64 = (0..n)
            .map(|_| mdp.sample_step(StateId(0), ACTION_A, &mut rng).unwrap().r)
            .sum::<f64>()
            / n as f64;
        assert!((mean_a + 0.8).abs() < 0.01, "{mean_a}");
        let big_losses = (0..n)
            .filter(|_| mdp.sample_step(StateId(0), ACTION_B, &mut rng).unwrap().r == -200.0)
            .count();
        let freq = big_losses as f64 / n as f64;
        assert!((freq - 0.01).abs() < 0.003, "{freq}");
    }

    #[test]
    fn batch_respects_nonoptimal_fraction() {
        let spec = det_spec(20);
        let mdp = spec.build(1.0).unwrap();
        let opt = spec.optimal_policy();
        let mut rng = seeded(42);

        let pure = generate_batch(&mdp, 20, 0.0, &opt, &mut rng).unwrap();
        assert!(pure.transitions().iter().all(|t| t.a == opt[t.s.0]));

        let never = generate_batch(&mdp, 20, 1.0, &opt, &mut rng).unwrap();
        assert!(never.transitions().iter().all(|t| t.a != opt[t.s.0]));

        let batch = generate_batch(&mdp, 1000, 0.1, &opt, &mut rng).unwrap();
        let off = batch.transitions().iter().filter(|t| t.a != opt[t.s.0]).count();
        let frac = off as f64 / batch.len() as f64;
        assert!((frac - 0.1).abs() < 0.01, "{frac}");
        assert_eq!(batch.num_episodes(), 1000);
        for ep in batch.episodes() {
            assert_eq!(ep[0].s, mdp.initial_state());
            assert!(ep.len() <= 200);
        }
    }

    #[test]
    fn batch_is_reproducible() {
        let spec = det_spec(10);
        let mdp = spec.build(1.0).unwrap();
        let opt = spec.optimal_policy();
        let a = generate_batch(&mdp, 50, 0.1, &opt, &mut seeded(7)).unwrap();
        let b = generate_batch(&mdp, 50, 0.1, &opt, &mut seeded(7)).unwrap();
        assert_eq!(crate::mdp::text::write_buffer(&a), crate::mdp::text::write_buffer(&b));
    }
}
