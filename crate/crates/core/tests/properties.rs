use cq_core::chain::{ChainSpec, ChainVariant};
use cq_core::deep::targets::{composite_targets, entropy_of_predictions, td_delta_targets};
use cq_core::deep::Matrix;
use cq_core::mdp::{ActionId, StateId};
use cq_core::oracle::{composite_reference, value_iteration, DEFAULT_TOL};
use cq_core::tabular::{composite_step, gamma_schedule, CompositeRates, QTables};
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = ChainVariant> {
    prop_oneof![Just(ChainVariant::Deterministic), Just(ChainVariant::Stochastic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn horizons_sum_to_optimal_values(k in 6usize..40, v in variant(), gamma in 0.5f64..=1.0, n in 1usize..12) {
        let mdp = ChainSpec { horizon_k: k, variant: v }.build(gamma).unwrap();
        let (q, _, h) = composite_reference(&mdp, n, DEFAULT_TOL).unwrap();
        for i in 0..n {
            prop_assert!(h.truncated[i].add(&h.shifted[i]).sup_distance(&q) < 1e-8);
        }
    }

    #[test]
    fn optimal_value_is_bounded_by_immediate_loss(k in 6usize..60, v in variant()) {
        // Each step costs at least 0.8 in expectation, and walking the chain
        // never costs more than 1.5 per state.
        let q = value_iteration(&ChainSpec { horizon_k: k, variant: v }.build(1.0).unwrap(), DEFAULT_TOL).unwrap();
        let v0 = q.get(StateId(0), ActionId(0));
        prop_assert!(v0 <= -0.8 + 1e-9);
        prop_assert!(v0 >= -(k as f64) * 1.5);
    }

    #[test]
    fn oracle_tables_are_composite_fixed_points(k in 6usize..20, n in 1usize..6, seed in 0u64..1000,
                                                aq in 0.01f64..1.0, atr in 0.01f64..1.0, ash in 0.01f64..1.0) {
        let spec = ChainSpec { horizon_k: k, variant: ChainVariant::Deterministic };
        let mdp = spec.build(1.0).unwrap();
        let (q, _, h) = composite_reference(&mdp, n, DEFAULT_TOL).unwrap();
        let start = QTables::from_reference(q, h);
        let mut tables = start.clone();
        let mut rng = cq_core::rng::seeded(seed);
        let rates = CompositeRates { alpha_q: aq, alpha_tr: atr, alpha_sh: ash };
        for s in mdp.non_terminal_states() {
            for a in 0..mdp.num_actions() {
                let t = mdp.sample_step(s, ActionId(a), &mut rng).unwrap();
                composite_step(&mut tables, &t, &rates);
            }
        }
        for (x, y) in tables.tables().zip(start.tables()) {
            prop_assert!(x.sup_distance(y) < 1e-10);
        }
    }

    #[test]
    fn schedule_is_increasing_and_capped(k in 1usize..40, cap in 0.5f64..0.999) {
        let g = gamma_schedule(k, cap);
        prop_assert_eq!(g.len(), k);
        prop_assert_eq!(g[0], 0.0);
        prop_assert!(g.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(g.iter().all(|&x| x <= cap));
    }

    #[test]
    fn entropy_ignores_a_common_offset(vals in prop::collection::vec(-10.0f64..10.0, 2..8), c in -100.0f64..100.0) {
        let zeros = vec![0.0; vals.len()];
        let moved: Vec<f64> = vals.iter().map(|v| v + c).collect();
        let a = entropy_of_predictions(&vals, &zeros, 1e-6);
        let b = entropy_of_predictions(&zeros, &moved, 1e-6);
        prop_assert!((a - b).abs() < 1e-6);
        prop_assert!(a >= 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 1e-6).ln() - 1e-12);
    }

    #[test]
    fn terminal_targets_drop_every_bootstrap(r in -5.0f64..5.0, n in 1usize..6,
                                             boot in prop::collection::vec(-50.0f64..50.0, 11)) {
        let next = Matrix::from_vec(1, 2 * n + 1, boot[..2 * n + 1].to_vec()).unwrap();
        let y = composite_targets(&[r], &[true], &[next], 0.99, n).unwrap();
        for i in 0..n {
            prop_assert_eq!(y.get(0, i), r);
            prop_assert_eq!(y.get(0, n + i), 0.0);
        }
        prop_assert_eq!(y.get(0, 2 * n), r);
    }

    #[test]
    fn delta_targets_telescope(r in -5.0f64..5.0, k in 1usize..8, w in prop::collection::vec(-10.0f64..10.0, 8)) {
        // Summing the head targets gives the single-discount target of Q_{gamma_k}.
        let gammas = gamma_schedule(k, 0.99);
        let next = Matrix::from_vec(1, k, w[..k].to_vec()).unwrap();
        let y = td_delta_targets(&[r], &[false], &[next], &gammas).unwrap();
        let sum: f64 = (0..k).map(|j| y.get(0, j)).sum();
        let q_next: f64 = w[..k].iter().sum();
        prop_assert!((sum - (r + gammas[k - 1] * q_next)).abs() < 1e-9);
    }

    #[test]
    fn twin_minimum_never_exceeds_either_critic(r in -5.0f64..5.0, a in prop::collection::vec(-50.0f64..50.0, 5),
                                                b in prop::collection::vec(-50.0f64..50.0, 5)) {
        let (ma, mb) = (Matrix::from_vec(1, 5, a.clone()).unwrap(), Matrix::from_vec(1, 5, b.clone()).unwrap());
        let twin = composite_targets(&[r], &[false], &[ma.clone(), mb.clone()], 0.9, 2).unwrap();
        let ya = composite_targets(&[r], &[false], &[ma], 0.9, 2).unwrap();
        let yb = composite_targets(&[r], &[false], &[mb], 0.9, 2).unwrap();
        for j in 0..5 {
            prop_assert!(twin.get(0, j) <= ya.get(0, j).min(yb.get(0, j)) + 1e-12);
        }
    }
}
