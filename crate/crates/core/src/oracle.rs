//! Exact dynamic-programming references: optimal and policy action-values,
//! truncated returns and shifted returns.
//!
//! Terminal states are absorbing with zero reward and zero value, so
//! episodes that end before a horizon simply contribute a shorter sum.

use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateId, TabularMdp};
use crate::qtable::{greedy_policy, QTable};

pub use crate::qtable::Policy;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;

/// Truncated and shifted tables for horizons `1..=n` (index `i - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonTables {
    pub truncated: Vec<QTable>,
    pub shifted: Vec<QTable>,
}

impl HorizonTables {
    pub fn new(mdp: &TabularMdp, policy: &[ActionId], q_full: &QTable, n: usize) -> Self {
        Self {
            truncated: truncated_oracle(mdp, policy, n),
            shifted: shifted_oracle(mdp, policy, q_full, n),
        }
    }

    pub fn n(&self) -> usize {
        self.truncated.len()
    }
}

// Flattened model: per pair, expected reward and (prob, next) successors.
struct Model {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    terminal: Vec<bool>,
    reward: Vec<f64>,
    succ: Vec<Vec<(f64, usize)>>,
}

impl Model {
    fn new(mdp: &TabularMdp) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let mut reward = vec![0.0; ns * na];
        let mut succ = vec![Vec::new(); ns * na];
        let terminal: Vec<bool> = (0..ns).map(|s| mdp.is_terminal(StateId(s))).collect();
        for s in mdp.non_terminal_states() {
            for a in 0..na {
                let d = mdp.outcome_unchecked(s.0, a);
                reward[s.0 * na + a] = d.expected_reward();
                succ[s.0 * na + a] = d.branches().iter().map(|b| (b.prob, b.next.0)).collect();
            }
        }
        Self {
            num_states: ns,
            num_actions: na,
            gamma: mdp.gamma(),
            terminal,
            reward,
            succ,
        }
    }

    /// `E[r] + gamma * E[v(s')]` for one pair, with `v` given per state.
    #[inline]
    fn backup(&self, idx: usize, v: impl Fn(usize) -> f64) -> f64 {
        let boot: f64 = self.succ[idx]
            .iter()
            .map(|&(p, n)| if self.terminal[n] { 0.0 } else { p * v(n) })
            .sum();
        self.reward[idx] + self.gamma * boot
    }
}

/// Iterates a Bellman backup to its fixed point. `state_value` turns the
/// current table into `v(s)` (max for optimality, policy lookup for
/// evaluation). Sweeps are Gauss-Seidel from the last state backwards; the
/// stopping test uses the sup-norm residual of a full synchronous backup.
fn solve(
    model: &Model,
    tol: f64,
    max_sweeps: usize,
    state_value: impl Fn(&[f64], usize) -> f64,
) -> Result<QTable> {
    let (ns, na) = (model.num_states, model.num_actions);
    let mut q = vec![0.0; ns * na];
    let mut residual = f64::INFINITY;
    for _ in 0..max_sweeps {
        for s in (0..ns).rev() {
            if model.terminal[s] {
                continue;
            }
            for a in 0..na {
                let idx = s * na + a;
                let v = model.backup(idx, |n| state_value(&q, n));
                q[idx] = v;
            }
        }
        residual = 0.0;
        for s in 0..ns {
            if model.terminal[s] {
                continue;
            }
            for a in 0..na {
                let idx = s * na + a;
                let target = model.backup(idx, |n| state_value(&q, n));
                residual = f64::max(residual, (target - q[idx]).abs());
            }
        }
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            let mut table = QTable::zeros(ns, na, model.gamma);
            for s in 0..ns {
                for a in 0..na {
                    table.set(StateId(s), ActionId(a), q[s * na + a]);
                }
            }
            return Ok(table);
        }
    }
    Err(Error::Divergence {
        iterations: max_sweeps,
        residual,
    })
}

/// Optimal action-values by value iteration.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<QTable> {
    value_iteration_capped(mdp, tol, DEFAULT_MAX_SWEEPS)
}

pub fn value_iteration_capped(mdp: &TabularMdp, tol: f64, max_sweeps: usize) -> Result<QTable> {
    if tol <= 0.0 {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let model = Model::new(mdp);
    let na = model.num_actions;
    solve(&model, tol, max_sweeps, |q, s| {
        q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Action-values of a fixed policy.
pub fn policy_q_evaluation(mdp: &TabularMdp, policy: &[ActionId], tol: f64) -> Result<QTable> {
    policy_q_evaluation_capped(mdp, policy, tol, DEFAULT_MAX_SWEEPS)
}

pub fn policy_q_evaluation_capped(
    mdp: &TabularMdp,
    policy: &[ActionId],
    tol: f64,
    max_sweeps: usize,
) -> Result<QTable> {
    if tol <= 0.0 {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    check_policy(mdp, policy)?;
    if mdp.gamma() == 1.0 && !mdp.policy_is_proper(policy) {
        // Undiscounted values of a non-terminating policy are unbounded.
        return Err(Error::Divergence {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let model = Model::new(mdp);
    let na = model.num_actions;
    solve(&model, tol, max_sweeps, |q, s| q[s * na + policy[s].0])
}

fn check_policy(mdp: &TabularMdp, policy: &[ActionId]) -> Result<()> {
    if policy.len() != mdp.num_states() {
        return Err(Error::Shape {
            expected: mdp.num_states(),
            got: policy.len(),
        });
    }
    for s in mdp.non_terminal_states() {
        if policy[s.0].0 >= mdp.num_actions() {
            return Err(Error::Range {
                what: "policy action",
                index: policy[s.0].0,
                limit: mdp.num_actions(),
            });
        }
    }
    Ok(())
}

/// Truncated returns for horizons `1..=n` under `policy`:
/// `T_1 = E[r]`, `T_i(s, a) = E[r] + gamma * E[T_{i-1}(s', policy(s'))]`.
///
/// # Panics
/// If `policy` is shorter than the state count or `n == 0`.
pub fn truncated_oracle(mdp: &TabularMdp, policy: &[ActionId], n: usize) -> Vec<QTable> {
    assert!(n >= 1, "horizon count must be at least 1");
    let model = Model::new(mdp);
    let na = model.num_actions;
    let mut out: Vec<QTable> = Vec::with_capacity(n);
    let mut prev: Option<QTable> = None;
    for _ in 0..n {
        let mut t = QTable::for_mdp(mdp);
        for s in mdp.non_terminal_states() {
            for a in 0..na {
                let idx = s.0 * na + a;
                let v = match &prev {
                    None => model.reward[idx],
                    Some(p) => model.backup(idx, |n| p.get(StateId(n), policy[n])),
                };
                t.set(s, ActionId(a), v);
            }
        }
        prev = Some(t.clone());
        out.push(t);
    }
    out
}

/// Shifted returns for shifts `1..=n` under `policy`:
/// `S_1(s, a) = gamma * E[Q(s', policy(s'))]`,
/// `S_i(s, a) = gamma * E[S_{i-1}(s', policy(s'))]`.
pub fn shifted_oracle(mdp: &TabularMdp, policy: &[ActionId], q_full: &QTable, n: usize) -> Vec<QTable> {
    assert!(n >= 1, "horizon count must be at least 1");
    let model = Model::new(mdp);
    let na = model.num_actions;
    let gamma = model.gamma;
    let mut out: Vec<QTable> = Vec::with_capacity(n);
    let mut prev = q_full.clone();
    for _ in 0..n {
        let mut t = QTable::for_mdp(mdp);
        for s in mdp.non_terminal_states() {
            for a in 0..na {
                let idx = s.0 * na + a;
                let boot: f64 = model.succ[idx]
                    .iter()
                    .map(|&(p, n)| {
                        if model.terminal[n] {
                            0.0
                        } else {
                            p * prev.get(StateId(n), policy[n])
                        }
                    })
                    .sum();
                t.set(s, ActionId(a), gamma * boot);
            }
        }
        prev = t.clone();
        out.push(t);
    }
    out
}

/// Optimal table, its greedy policy and the matching horizon tables.
pub fn composite_reference(mdp: &TabularMdp, n: usize, tol: f64) -> Result<(QTable, Policy, HorizonTables)> {
    let q = value_iteration(mdp, tol)?;
    let policy = greedy_policy(&q);
    let horizons = HorizonTables::new(mdp, &policy, &q, n);
    Ok((q, policy, horizons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{make_deterministic_chain, make_stochastic_chain, ChainSpec, ChainVariant, ACTION_A, ACTION_B};

    #[test]
    fn probe_values() {
        for gamma in [0.0, 0.5, 1.0] {
            let mdp = TabularMdp::two_state_probe(gamma);
            let q = value_iteration(&mdp, DEFAULT_TOL).unwrap();
            assert_eq!(q.get(StateId(0), ActionId(0)), 1.0);
            let pol = vec![ActionId(0); 2];
            let qp = policy_q_evaluation(&mdp, &pol, DEFAULT_TOL).unwrap();
            assert_eq!(qp.get(StateId(0), ActionId(0)), 1.0);
            for s in shifted_oracle(&mdp, &pol, &q, 5) {
                assert!(s.values().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn deterministic_chain_k20() {
        let mdp = make_deterministic_chain(20).unwrap();
        let q = value_iteration(&mdp, DEFAULT_TOL).unwrap();
        assert!((q.get(StateId(0), ACTION_A) + 20.0).abs() < 1e-9);
        let policy = greedy_policy(&q);
        let spec = ChainSpec {
            horizon_k: 20,
            variant: ChainVariant::Deterministic,
        };
        assert!(crate::qtable::policies_agree(&mdp, &policy, &spec.optimal_policy()));
        let tr = truncated_oracle(&mdp, &policy, 4);
        assert!((tr[3].get(StateId(0), ACTION_A) + 4.0).abs() < 1e-12);
        let sh = shifted_oracle(&mdp, &policy, &q, 4);
        assert!((sh[3].get(StateId(0), ACTION_A) + 16.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_chain_policy_stable_over_discounts() {
        for gamma in [0.9, 0.93, 0.97, 0.99, 1.0] {
            for k in [6, 10, 20] {
                let mdp = crate::chain::make_deterministic_chain_with_gamma(k, gamma).unwrap();
                let q = value_iteration(&mdp, DEFAULT_TOL).unwrap();
                let spec = ChainSpec {
                    horizon_k: k,
                    variant: ChainVariant::Deterministic,
                };
                assert!(crate::qtable::policies_agree(&mdp, &greedy_policy(&q), &spec.optimal_policy()));
            }
        }
    }

    #[test]
    fn stochastic_chain_values() {
        let mdp = make_stochastic_chain(200).unwrap();
        let q = value_iteration(&mdp, DEFAULT_TOL).unwrap();
        assert!((q.get(StateId(0), ACTION_A) + 159.2).abs() < 1e-8);
        assert!(greedy_policy(&q)[..199].iter().all(|&a| a == ACTION_A));
        let always_b = vec![ACTION_B; 200];
        let qb = policy_q_evaluation(&mdp, &always_b, DEFAULT_TOL).unwrap();
        assert!((qb.get(StateId(0), ACTION_B) + 1.01 * 199.0).abs() < 1e-8);

        let small = make_stochastic_chain(2).unwrap();
        let q2 = value_iteration(&small, DEFAULT_TOL).unwrap();
        assert!((q2.get(StateId(0), ACTION_A) + 0.8).abs() < 1e-12);
        assert!((q2.get(StateId(0), ACTION_B) + 1.01).abs() < 1e-12);
    }

    #[test]
    fn stochastic_truncated_is_linear() {
        let k = 10;
        let mdp = make_stochastic_chain(k).unwrap();
        let policy = vec![ACTION_A; k];
        let tr = truncated_oracle(&mdp, &policy, k + 2);
        for i in 1..=k - 1 {
            assert!((tr[i - 1].get(StateId(0), ACTION_A) + 0.8 * i as f64).abs() < 1e-12);
        }
        // Past the end of the chain the truncated return stops growing.
        assert!((tr[k + 1].get(StateId(0), ACTION_A) + 0.8 * (k - 1) as f64).abs() < 1e-12);
    }

    #[test]
    fn improper_policy_evaluation_diverges() {
        let mdp = make_deterministic_chain(8).unwrap();
        let always_b = vec![ACTION_B; 8];
        assert!(matches!(
            policy_q_evaluation(&mdp, &always_b, DEFAULT_TOL),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        // Backward moves keep a single backwards sweep from converging.
        let mdp = make_deterministic_chain(20).unwrap().with_gamma(0.999).unwrap();
        let err = value_iteration_capped(&mdp, 1e-10, 1).unwrap_err();
        assert!(matches!(err, Error::Divergence { iterations: 1, residual } if residual > 0.0));
    }

    #[test]
    fn evaluation_of_greedy_matches_optimum() {
        let mdp = make_deterministic_chain(12).unwrap().with_gamma(0.95).unwrap();
        let q = value_iteration(&mdp, DEFAULT_TOL).unwrap();
        let qp = policy_q_evaluation(&mdp, &greedy_policy(&q), DEFAULT_TOL).unwrap();
        assert!(q.sup_distance(&qp) < 1e-9);
    }
}
