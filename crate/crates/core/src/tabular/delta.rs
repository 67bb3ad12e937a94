use super::blend;
use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateId, TabularMdp, Transition};
use crate::qtable::{argmax, QTable};

/// `gamma_1 = 0`, `gamma_i = min((gamma_{i-1} + 1) / 2, cap)`.
pub fn gamma_schedule(k: usize, cap: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    let mut g = 0.0_f64;
    for i in 0..k {
        if i > 0 {
            g = ((g + 1.0) / 2.0).min(cap);
        }
        out.push(g);
    }
    out
}

pub(crate) fn check_gammas(gammas: &[f64]) -> Result<()> {
    if gammas.is_empty() {
        return Err(Error::Config("at least one discount is required".into()));
    }
    if gammas.iter().any(|g| !(0.0..1.0).contains(g)) {
        return Err(Error::Config(format!("discounts must lie in [0, 1): {gammas:?}")));
    }
    if gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("discounts must be strictly increasing: {gammas:?}")));
    }
    Ok(())
}

/// Delta heads `W_1..W_k`; `Q_{gamma_i}` is the prefix sum `W_1 + .. + W_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTables {
    heads: Vec<QTable>,
    gammas: Vec<f64>,
}

impl DeltaTables {
    pub fn zeros(mdp: &TabularMdp, gammas: Vec<f64>) -> Result<Self> {
        check_gammas(&gammas)?;
        Ok(Self {
            heads: gammas
                .iter()
                .map(|&g| QTable::zeros(mdp.num_states(), mdp.num_actions(), g))
                .collect(),
            gammas,
        })
    }

    /// Builds heads from per-discount value tables `Q_{gamma_i}`.
    pub fn from_values(values: &[QTable], gammas: Vec<f64>) -> Result<Self> {
        check_gammas(&gammas)?;
        if values.len() != gammas.len() {
            return Err(Error::Shape {
                expected: gammas.len(),
                got: values.len(),
            });
        }
        let heads = values
            .iter()
            .enumerate()
            .map(|(i, q)| if i == 0 { q.clone() } else { q.add(&values[i - 1].map(|v| -v)) })
            .collect();
        Ok(Self { heads, gammas })
    }

    pub fn heads(&self) -> &[QTable] {
        &self.heads
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn k(&self) -> usize {
        self.heads.len()
    }

    /// `Q_{gamma_i}(s, a)` for `i` in `1..=k`.
    pub fn value(&self, i: usize, s: StateId, a: ActionId) -> f64 {
        self.heads[..i].iter().map(|w| w.get(s, a)).sum()
    }

    /// `Q_{gamma_k}` as a table.
    pub fn composite(&self) -> QTable {
        let mut q = self.heads[0].clone();
        for w in &self.heads[1..] {
            q = q.add(w);
        }
        q
    }

    /// Greedy action of `Q_{gamma_k}`.
    pub fn greedy(&self, s: StateId) -> ActionId {
        let na = self.heads[0].num_actions();
        let row: Vec<f64> = (0..na).map(|a| self.value(self.k(), s, ActionId(a))).collect();
        ActionId(argmax(&row))
    }
}

/// One TD(Delta) update of all heads from the pre-step tables.
pub fn td_delta_step(tables: &mut DeltaTables, t: &Transition, alpha: f64) {
    let k = tables.k();
    let a_star = tables.greedy(t.s_next);
    let boot = |x: f64| if t.done { 0.0 } else { x };
    let targets: Vec<f64> = (0..k)
        .map(|i| {
            let g = tables.gammas[i];
            if i == 0 {
                t.r + g * boot(tables.heads[0].get(t.s_next, a_star))
            } else {
                let prev = tables.value(i, t.s_next, a_star);
                let own = tables.heads[i].get(t.s_next, a_star);
                (g - tables.gammas[i - 1]) * boot(prev) + g * boot(own)
            }
        })
        .collect();
    for (w, target) in tables.heads.iter_mut().zip(targets) {
        blend(w, t.s, t.a, target, alpha);
    }
}
