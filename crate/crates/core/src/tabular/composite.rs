use super::blend;
use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateId, TabularMdp, Transition};
use crate::oracle::HorizonTables;
use crate::qtable::QTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeRates {
    pub alpha_q: f64,
    pub alpha_tr: f64,
    pub alpha_sh: f64,
}

impl CompositeRates {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_q", self.alpha_q), ("alpha_tr", self.alpha_tr), ("alpha_sh", self.alpha_sh)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} = {v} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Full, truncated and shifted tables of the composite learner.
/// `q_trunc[i]` and `q_shift[i]` hold horizon `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTables {
    pub q_full: QTable,
    pub q_trunc: Vec<QTable>,
    pub q_shift: Vec<QTable>,
}

impl QTables {
    pub fn zeros(mdp: &TabularMdp, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("rollout length n must be at least 1".into()));
        }
        let z = QTable::for_mdp(mdp);
        Ok(Self {
            q_full: z.clone(),
            q_trunc: vec![z.clone(); n],
            q_shift: vec![z; n],
        })
    }

    /// Tables loaded with exact references.
    pub fn from_reference(q_full: QTable, horizons: HorizonTables) -> Self {
        Self {
            q_full,
            q_trunc: horizons.truncated,
            q_shift: horizons.shifted,
        }
    }

    pub fn n(&self) -> usize {
        self.q_trunc.len()
    }

    pub fn tables(&self) -> impl Iterator<Item = &QTable> {
        std::iter::once(&self.q_full).chain(&self.q_trunc).chain(&self.q_shift)
    }

    /// Targets of one transition, read from the current tables.
    pub fn targets(&self, t: &Transition) -> CompositeTargets {
        let mut values = vec![0.0; 2 * self.n() + 1];
        self.write_targets(t, &mut values);
        CompositeTargets {
            s: t.s,
            a: t.a,
            values,
        }
    }

    // Layout of `out`: full, truncated 1..=n, shifted 1..=n.
    fn write_targets(&self, t: &Transition, out: &mut [f64]) {
        let n = self.n();
        let gamma = self.q_full.gamma();
        let a_star = self.q_full.greedy_action(t.s_next);
        let boot = |table: &QTable| if t.done { 0.0 } else { table.get(t.s_next, a_star) };

        out[1] = t.r;
        out[n + 1] = gamma * boot(&self.q_full);
        for i in 1..n {
            out[i + 1] = t.r + gamma * boot(&self.q_trunc[i - 1]);
            out[n + i + 1] = gamma * boot(&self.q_shift[i - 1]);
        }
        out[0] = t.r + gamma * (boot(&self.q_trunc[n - 1]) + boot(&self.q_shift[n - 1]));
    }

    /// Applies precomputed targets. `order` lists table indices
    /// (0 = full, 1..=n truncated, n+1..=2n shifted).
    pub fn apply(&mut self, targets: &CompositeTargets, rates: &CompositeRates, order: impl IntoIterator<Item = usize>) {
        self.apply_values(targets.s, targets.a, &targets.values, rates, order);
    }

    fn apply_values(
        &mut self,
        s: StateId,
        a: ActionId,
        values: &[f64],
        rates: &CompositeRates,
        order: impl IntoIterator<Item = usize>,
    ) {
        let n = self.n();
        for idx in order {
            let target = values[idx];
            match idx {
                0 => blend(&mut self.q_full, s, a, target, rates.alpha_q),
                i if i <= n => blend(&mut self.q_trunc[i - 1], s, a, target, rates.alpha_tr),
                i => blend(&mut self.q_shift[i - n - 1], s, a, target, rates.alpha_sh),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeTargets {
    pub s: StateId,
    pub a: ActionId,
    /// Full target, then truncated `1..=n`, then shifted `1..=n`.
    pub values: Vec<f64>,
}

impl CompositeTargets {
    pub fn full(&self) -> f64 {
        self.values[0]
    }

    pub fn truncated(&self) -> &[f64] {
        let n = self.values.len() / 2;
        &self.values[1..=n]
    }

    pub fn shifted(&self) -> &[f64] {
        let n = self.values.len() / 2;
        &self.values[n + 1..]
    }
}

const INLINE_TABLES: usize = 33;

/// One composite update: all `2n + 1` targets from the pre-step tables,
/// then all writes.
pub fn composite_step(tables: &mut QTables, t: &Transition, rates: &CompositeRates) {
    let count = 2 * tables.n() + 1;
    if count <= INLINE_TABLES {
        let mut buf = [0.0; INLINE_TABLES];
        tables.write_targets(t, &mut buf[..count]);
        tables.apply_values(t.s, t.a, &buf[..count], rates, 0..count);
    } else {
        let targets = tables.targets(t);
        tables.apply(&targets, rates, 0..count);
    }
}

/// Full table plus a single one-step shifted table.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedTables {
    pub q: QTable,
    pub shift1: QTable,
}

/// Q-learning whose bootstrap is delegated to a shifted table:
/// `shift1(s,a) <- gamma max Q(s',.)`, `Q(s,a) <- r + shift1(s,a)`.
/// Both targets use the pre-step tables. Only `alpha_q` and `alpha_sh` are used.
pub fn shifted_only_step(tables: &mut ShiftedTables, t: &Transition, rates: &CompositeRates) {
    let gamma = tables.q.gamma();
    let shift_target = if t.done { 0.0 } else { gamma * tables.q.max_value(t.s_next) };
    let q_target = if t.done { t.r } else { t.r + tables.shift1.get(t.s, t.a) };
    blend(&mut tables.shift1, t.s, t.a, shift_target, rates.alpha_sh);
    blend(&mut tables.q, t.s, t.a, q_target, rates.alpha_q);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::make_deterministic_chain;
    use crate::oracle::{composite_reference, DEFAULT_TOL};
    use crate::rng::seeded;
    use proptest::prelude::*;

    const RATES: CompositeRates = CompositeRates {
        alpha_q: 0.3,
        alpha_tr: 0.5,
        alpha_sh: 0.7,
    };

    fn probe_done() -> Transition {
        Transition {
            s: StateId(0),
            a: ActionId(0),
            r: 1.0,
            s_next: StateId(1),
            done: true,
        }
    }

    #[test]
    fn probe_done_transition() {
        let mdp = TabularMdp::two_state_probe(0.9);
        let mut tables = QTables::zeros(&mdp, 3).unwrap();
        composite_step(&mut tables, &probe_done(), &RATES);
        let (s, a) = (StateId(0), ActionId(0));
        for tr in &tables.q_trunc {
            assert_eq!(tr.get(s, a), 0.5);
        }
        for sh in &tables.q_shift {
            assert_eq!(sh.get(s, a), 0.0);
        }
        assert_eq!(tables.q_full.get(s, a), 0.3);
    }

    #[test]
    fn oracle_tables_are_a_fixed_point() {
        for gamma in [1.0, 0.9] {
            let mdp = make_deterministic_chain(20).unwrap().with_gamma(gamma).unwrap();
            for n in [1, 4, 7] {
                let (q, _, h) = composite_reference(&mdp, n, DEFAULT_TOL).unwrap();
                let reference = QTables::from_reference(q, h);
                let mut rng = seeded(1);
                for s in mdp.non_terminal_states() {
                    for a in 0..3 {
                        let mut tables = reference.clone();
                        let t = mdp.sample_step(s, ActionId(a), &mut rng).unwrap();
                        composite_step(&mut tables, &t, &RATES);
                        for (x, y) in tables.tables().zip(reference.tables()) {
                            assert!(x.sup_distance(y) <= 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn shifted_only_done_gives_reward() {
        let mdp = TabularMdp::two_state_probe(0.9);
        let mut tables = ShiftedTables {
            q: QTable::for_mdp(&mdp),
            shift1: QTable::for_mdp(&mdp),
        };
        tables.shift1.set(StateId(0), ActionId(0), 5.0);
        let full = CompositeRates {
            alpha_q: 1.0,
            alpha_tr: 1.0,
            alpha_sh: 1.0,
        };
        shifted_only_step(&mut tables, &probe_done(), &full);
        assert_eq!(tables.q.get(StateId(0), ActionId(0)), 1.0);
        assert_eq!(tables.shift1.get(StateId(0), ActionId(0)), 0.0);
    }

    #[test]
    fn shifted_only_fixed_point() {
        let mdp = make_deterministic_chain(12).unwrap().with_gamma(0.95).unwrap();
        let (q, _, h) = composite_reference(&mdp, 1, DEFAULT_TOL).unwrap();
        let reference = ShiftedTables {
            q,
            shift1: h.shifted[0].clone(),
        };
        let mut rng = seeded(2);
        for s in mdp.non_terminal_states() {
            for a in 0..3 {
                let mut tables = reference.clone();
                let t = mdp.sample_step(s, ActionId(a), &mut rng).unwrap();
                shifted_only_step(&mut tables, &t, &RATES);
                assert!(tables.q.sup_distance(&reference.q) <= 1e-12);
                assert!(tables.shift1.sup_distance(&reference.shift1) <= 1e-12);
            }
        }
    }

    #[test]
    fn rates_are_validated() {
        assert!(RATES.validate().is_ok());
        let bad = CompositeRates { alpha_tr: 0.0, ..RATES };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    fn arb_tables(n: usize) -> impl Strategy<Value = (QTables, Transition)> {
        let cells = 6 * 3;
        (
            prop::collection::vec(-10.0f64..10.0, cells * (2 * n + 1)),
            0usize..4,
            0usize..3,
            -5.0f64..5.0,
            0usize..6,
        )
            .prop_map(move |(vals, s, a, r, s_next)| {
                let mdp = make_deterministic_chain(6).unwrap().with_gamma(0.9).unwrap();
                let mut tables = QTables::zeros(&mdp, n).unwrap();
                let mut it = vals.into_iter();
                let mut fill = |q: &mut QTable| {
                    for st in mdp.non_terminal_states() {
                        for ac in 0..3 {
                            q.set(st, ActionId(ac), it.next().unwrap());
                        }
                    }
                    for _ in 0..6 {
                        it.next();
                    }
                };
                fill(&mut tables.q_full);
                for q in tables.q_trunc.iter_mut().chain(tables.q_shift.iter_mut()) {
                    fill(q);
                }
                let done = mdp.is_terminal(StateId(s_next));
                let t = Transition {
                    s: StateId(s),
                    a: ActionId(a),
                    r,
                    s_next: StateId(s_next),
                    done,
                };
                (tables, t)
            })
    }

    proptest! {
        #[test]
        fn write_order_does_not_matter((tables, t) in arb_tables(3), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut forward = tables.clone();
            composite_step(&mut forward, &t, &RATES);

            let mut order: Vec<usize> = (0..7).collect();
            order.shuffle(&mut seeded(seed));
            let mut permuted = tables.clone();
            let targets = permuted.targets(&t);
            permuted.apply(&targets, &RATES, order);
            prop_assert_eq!(forward, permuted);
        }

        #[test]
        fn terminal_rows_stay_zero(seed in any::<u64>(), n in 1usize..6) {
            let mdp = make_deterministic_chain(8).unwrap();
            let batch = crate::chain::generate_batch(
                &mdp, 20, 0.3,
                &crate::chain::ChainSpec { horizon_k: 8, variant: crate::chain::ChainVariant::Deterministic }.optimal_policy(),
                &mut seeded(seed),
            ).unwrap();
            let mut tables = QTables::zeros(&mdp, n).unwrap();
            let mut rng = seeded(seed ^ 1);
            for _ in 0..2000 {
                let t = batch.get(batch.sample_index(&mut rng).unwrap()).unwrap();
                composite_step(&mut tables, t, &RATES);
            }
            for q in tables.tables() {
                for s in mdp.terminal_states() {
                    prop_assert!(q.row(s).iter().all(|&v| v == 0.0));
                }
            }
        }
    }
}
