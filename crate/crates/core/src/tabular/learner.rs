use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use super::{
    composite_step, nstep_model_step, nstep_onpolicy_step, shifted_only_step, td_delta_step, vanilla_step,
    CompositeRates, DeltaTables, QTables, ShiftedTables,
};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, ReplayBuffer, StateId, TabularMdp};
use crate::qtable::QTable;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Vanilla,
    Composite,
    Shifted,
    NStepOnPolicy,
    NStepModel,
    TdDelta,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        Self::Vanilla,
        Self::Composite,
        Self::Shifted,
        Self::NStepOnPolicy,
        Self::NStepModel,
        Self::TdDelta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vanilla => "vanilla",
            Self::Composite => "composite",
            Self::Shifted => "shifted",
            Self::NStepOnPolicy => "nstep_onpolicy",
            Self::NStepModel => "nstep_model",
            Self::TdDelta => "td_delta",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown learner kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerParams {
    pub kind: LearnerKind,
    pub n: usize,
    pub alpha_q: f64,
    pub alpha_tr: f64,
    pub alpha_sh: f64,
    /// Discounts of the TD(Delta) heads.
    pub gammas: Vec<f64>,
}

impl LearnerParams {
    pub fn rates(&self) -> CompositeRates {
        CompositeRates {
            alpha_q: self.alpha_q,
            alpha_tr: self.alpha_tr,
            alpha_sh: self.alpha_sh,
        }
    }
}

/// A tabular learner selected at run time.
#[derive(Debug, Clone)]
pub enum Learner {
    Vanilla { q: QTable, alpha: f64 },
    Composite { tables: QTables, rates: CompositeRates },
    Shifted { tables: ShiftedTables, rates: CompositeRates },
    NStepOnPolicy { q: QTable, n: usize, alpha: f64 },
    NStepModel { q: QTable, n: usize, alpha: f64 },
    TdDelta { tables: DeltaTables, alpha: f64 },
}

impl Learner {
    pub fn new(params: &LearnerParams, mdp: &TabularMdp) -> Result<Self> {
        let rates = params.rates();
        rates.validate()?;
        if params.n == 0 {
            return Err(Error::Config("learner.n must be at least 1".into()));
        }
        let (alpha, n) = (params.alpha_q, params.n);
        let q = QTable::for_mdp(mdp);
        Ok(match params.kind {
            LearnerKind::Vanilla => Self::Vanilla { q, alpha },
            LearnerKind::Composite => Self::Composite {
                tables: QTables::zeros(mdp, n)?,
                rates,
            },
            LearnerKind::Shifted => Self::Shifted {
                tables: ShiftedTables { q: q.clone(), shift1: q },
                rates,
            },
            LearnerKind::NStepOnPolicy => Self::NStepOnPolicy { q, n, alpha },
            LearnerKind::NStepModel => Self::NStepModel { q, n, alpha },
            LearnerKind::TdDelta => Self::TdDelta {
                tables: DeltaTables::zeros(mdp, params.gammas.clone())?,
                alpha,
            },
        })
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            Self::Vanilla { .. } => LearnerKind::Vanilla,
            Self::Composite { .. } => LearnerKind::Composite,
            Self::Shifted { .. } => LearnerKind::Shifted,
            Self::NStepOnPolicy { .. } => LearnerKind::NStepOnPolicy,
            Self::NStepModel { .. } => LearnerKind::NStepModel,
            Self::TdDelta { .. } => LearnerKind::TdDelta,
        }
    }

    /// One update on record `index` of `buffer`. The on-policy n-step
    /// learner uses the window starting at `index`.
    pub fn update(&mut self, buffer: &ReplayBuffer, index: usize, mdp: &TabularMdp, rng: &mut Rng) -> Result<()> {
        let t = buffer.get(index).ok_or(Error::Range {
            what: "buffer index",
            index,
            limit: buffer.len(),
        })?;
        match self {
            Self::Vanilla { q, alpha } => vanilla_step(q, t, *alpha),
            Self::Composite { tables, rates } => composite_step(tables, t, rates),
            Self::Shifted { tables, rates } => shifted_only_step(tables, t, rates),
            Self::NStepOnPolicy { q, n, alpha } => nstep_onpolicy_step(q, buffer.window(index, *n), *alpha)?,
            Self::NStepModel { q, n, alpha } => nstep_model_step(q, t, mdp, *n, *alpha, rng)?,
            Self::TdDelta { tables, alpha } => td_delta_step(tables, t, *alpha),
        }
        Ok(())
    }

    /// The table whose greedy policy the learner follows.
    pub fn q(&self) -> Cow<'_, QTable> {
        match self {
            Self::Vanilla { q, .. } | Self::NStepOnPolicy { q, .. } | Self::NStepModel { q, .. } => Cow::Borrowed(q),
            Self::Composite { tables, .. } => Cow::Borrowed(&tables.q_full),
            Self::Shifted { tables, .. } => Cow::Borrowed(&tables.q),
            Self::TdDelta { tables, .. } => Cow::Owned(tables.composite()),
        }
    }

    pub fn greedy_action(&self, s: StateId) -> ActionId {
        match self {
            Self::TdDelta { tables, .. } => tables.greedy(s),
            _ => self.q().greedy_action(s),
        }
    }

    /// Auxiliary values at `(s, a)` worth logging: truncated and shifted
    /// tables, or the per-discount values of TD(Delta).
    pub fn aux_metrics(&self, s: StateId, a: ActionId) -> Vec<(String, f64)> {
        match self {
            Self::Composite { tables, .. } => {
                let mut out = Vec::with_capacity(2 * tables.n());
                for (i, t) in tables.q_trunc.iter().enumerate() {
                    out.push((format!("q_trunc_{}", i + 1), t.get(s, a)));
                }
                for (i, t) in tables.q_shift.iter().enumerate() {
                    out.push((format!("q_shift_{}", i + 1), t.get(s, a)));
                }
                out
            }
            Self::Shifted { tables, .. } => vec![("q_shift_1".into(), tables.shift1.get(s, a))],
            Self::TdDelta { tables, .. } => (1..=tables.k())
                .map(|i| (format!("q_gamma_{i}"), tables.value(i, s, a)))
                .collect(),
            _ => Vec::new(),
        }
    }
}
