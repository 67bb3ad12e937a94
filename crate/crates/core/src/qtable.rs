use crate::mdp::{ActionId, StateId, TabularMdp};

/// Deterministic policy: one action per state. Entries for terminal
/// states are ignored.
pub type Policy = Vec<ActionId>;

/// Dense `num_states x num_actions` action-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize, gamma: f64) -> Self {
        Self {
            num_states,
            num_actions,
            gamma,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn for_mdp(mdp: &TabularMdp) -> Self {
        Self::zeros(mdp.num_states(), mdp.num_actions(), mdp.gamma())
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

    #[inline]
    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s.0 * self.num_actions + a.0]
    }

    #[inline]
    pub fn set(&mut self, s: StateId, a: ActionId, v: f64) {
        self.values[s.0 * self.num_actions + a.0] = v;
    }

    #[inline]
    pub fn row(&self, s: StateId) -> &[f64] {
        &self.values[s.0 * self.num_actions..(s.0 + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Argmax over actions; ties go to the lowest action index.
    #[inline]
    pub fn greedy_action(&self, s: StateId) -> ActionId {
        ActionId(argmax(self.row(s)))
    }

    #[inline]
    pub fn max_value(&self, s: StateId) -> f64 {
        let row = self.row(s);
        row[argmax(row)]
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> QTable {
        QTable {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &QTable) -> QTable {
        QTable {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            ..self.clone()
        }
    }
}

#[inline]
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-state greedy action with lowest-index tie-break.
pub fn greedy_policy(q: &QTable) -> Policy {
    (0..q.num_states()).map(|s| q.greedy_action(StateId(s))).collect()
}

/// True if `policy` agrees with `reference` on every non-terminal state.
pub fn policies_agree(mdp: &TabularMdp, policy: &[ActionId], reference: &[ActionId]) -> bool {
    mdp.non_terminal_states().all(|s| policy[s.0] == reference[s.0])
}
