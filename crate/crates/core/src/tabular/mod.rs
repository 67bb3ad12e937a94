//! Sample-based tabular learners.
//!
//! All single-transition updates read every target from the pre-step
//! tables and only then write, so the result never depends on the order in
//! which the individual tables are touched. Bootstrap terms are zero when a
//! transition ends in a terminal state.

mod composite;
mod delta;
mod learner;
mod nstep;

pub use composite::{composite_step, shifted_only_step, CompositeRates, CompositeTargets, QTables, ShiftedTables};
pub use delta::{gamma_schedule, td_delta_step, DeltaTables};
pub use learner::{Learner, LearnerKind, LearnerParams};
pub use nstep::{nstep_model_step, nstep_onpolicy_step};

use rand::Rng as _;

use crate::mdp::{ActionId, StateId, Transition};
use crate::qtable::QTable;
use crate::rng::Rng;

/// One Q-learning update: `Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max Q(s',.))`.
pub fn vanilla_step(q: &mut QTable, t: &Transition, alpha: f64) {
    let boot = if t.done { 0.0 } else { q.max_value(t.s_next) };
    let target = t.r + q.gamma() * boot;
    blend(q, t.s, t.a, target, alpha);
}

#[inline]
pub(crate) fn blend(q: &mut QTable, s: StateId, a: ActionId, target: f64, alpha: f64) {
    let old = q.get(s, a);
    q.set(s, a, (1.0 - alpha) * old + alpha * target);
}

/// Uniform random action with probability `eps`, otherwise greedy.
///
/// Always consumes one draw; exploring consumes a second one.
pub fn epsilon_greedy(q: &QTable, s: StateId, eps: f64, rng: &mut Rng) -> ActionId {
    let u: f64 = rng.random();
    if u < eps {
        ActionId(rng.random_range(0..q.num_actions()))
    } else {
        q.greedy_action(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::make_deterministic_chain;
    use crate::mdp::TabularMdp;
    use crate::oracle::{value_iteration, DEFAULT_TOL};
    use crate::rng::seeded;

    fn probe_transition() -> Transition {
        Transition {
            s: StateId(0),
            a: ActionId(0),
            r: 1.0,
            s_next: StateId(1),
            done: true,
        }
    }

    #[test]
    fn vanilla_probe_half_step() {
        let mdp = TabularMdp::two_state_probe(0.9);
        let mut q = QTable::for_mdp(&mdp);
        vanilla_step(&mut q, &probe_transition(), 0.5);
        assert_eq!(q.get(StateId(0), ActionId(0)), 0.5);
    }

    #[test]
    fn vanilla_full_rate_done_gives_reward() {
        let mut q = QTable::zeros(2, 1, 0.9);
        q.set(StateId(0), ActionId(0), 17.0);
        q.set(StateId(1), ActionId(0), 99.0);
        let mut t = probe_transition();
        t.r = -3.25;
        vanilla_step(&mut q, &t, 1.0);
        assert_eq!(q.get(StateId(0), ActionId(0)), -3.25);
    }

    #[test]
    fn vanilla_fixed_point_on_chain() {
        let mdp = make_deterministic_chain(10).unwrap();
        let q_star = value_iteration(&mdp, DEFAULT_TOL).unwrap();
        let mut rng = seeded(0);
        for s in mdp.non_terminal_states() {
            for a in 0..3 {
                let mut q = q_star.clone();
                let t = mdp.sample_step(s, ActionId(a), &mut rng).unwrap();
                vanilla_step(&mut q, &t, 0.3);
                assert!(q.sup_distance(&q_star) < 1e-12);
            }
        }
    }

    #[test]
    fn epsilon_greedy_extremes_and_rate() {
        let mut q = QTable::zeros(1, 3, 1.0);
        q.set(StateId(0), ActionId(2), 1.0);
        let mut rng = seeded(4);
        assert!((0..1000).all(|_| epsilon_greedy(&q, StateId(0), 0.0, &mut rng) == ActionId(2)));

        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[epsilon_greedy(&q, StateId(0), 1.0, &mut rng).0] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }

        let greedy = (0..n)
            .filter(|_| epsilon_greedy(&q, StateId(0), 0.1, &mut rng) == ActionId(2))
            .count();
        let freq = greedy as f64 / n as f64;
        assert!((freq - (0.9 + 0.1 / 3.0)).abs() < 0.01, "{freq}");
    }
}
