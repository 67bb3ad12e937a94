use std::fmt;
use std::str::FromStr;

use super::params::{GroupRates, ParamGroup, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            _ => Err(Error::Config(format!("unknown optimizer `{s}`"))),
        }
    }
}

/// Gradient-descent optimizer with a learning rate per parameter group.
///
/// Adam keeps per-parameter moments and uses the group rate as its step
/// size; SGD applies `theta -= rate * grad`.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    rates: GroupRates,
    groups: Vec<ParamGroup>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ParamVector, rates: GroupRates) -> Self {
        let n = params.len();
        let (m, v) = match kind {
            OptimizerKind::Adam => (vec![0.0; n], vec![0.0; n]),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Self {
            kind,
            rates,
            groups: params.layout().group_map(),
            m,
            v,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn rates(&self) -> &GroupRates {
        &self.rates
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        if !params.same_layout(grad) || params.len() != self.groups.len() {
            return Err(Error::Layout("gradient layout does not match parameters".into()));
        }
        self.t += 1;
        let rate: Vec<f64> = ParamGroup::ALL.iter().map(|&g| self.rates.get(g)).collect();
        let values = params.values_mut();
        let g = grad.values();
        match self.kind {
            OptimizerKind::Sgd => {
                for (i, p) in values.iter_mut().enumerate() {
                    let lr = rate[self.groups[i].index()];
                    if lr != 0.0 {
                        *p -= lr * g[i];
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.t as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for (i, p) in values.iter_mut().enumerate() {
                    let lr = rate[self.groups[i].index()];
                    let m = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
                    let v = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    self.m[i] = m;
                    self.v[i] = v;
                    if lr != 0.0 {
                        *p -= lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::params::Layout;
    use std::sync::Arc;

    fn two_groups() -> ParamVector {
        let mut l = Layout::new();
        l.push("a", ParamGroup::Trunk, 1, 2);
        l.push("b", ParamGroup::TruncHeads, 1, 2);
        ParamVector::from_values(Arc::new(l), vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn sgd_step() {
        let mut p = two_groups();
        let g = ParamVector::from_values(p.layout().clone(), vec![1.0, -1.0, 2.0, 0.5]).unwrap();
        let rates = GroupRates::uniform(0.1).with(ParamGroup::TruncHeads, 0.5);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &p, rates);
        opt.step(&mut p, &g).unwrap();
        assert_eq!(p.values(), &[0.9, 2.1, 2.0, 3.75]);
    }

    #[test]
    fn adam_first_step_is_signed_rate() {
        let mut p = two_groups();
        let g = ParamVector::from_values(p.layout().clone(), vec![3.0, -0.2, 1e-3, -5.0]).unwrap();
        let rates = GroupRates::uniform(0.01).with(ParamGroup::TruncHeads, 0.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, &p, rates);
        opt.step(&mut p, &g).unwrap();
        assert!((p.values()[0] - 0.99).abs() < 1e-8);
        assert!((p.values()[1] - 2.01).abs() < 1e-8);
        // A zero rate freezes the group bitwise.
        assert_eq!(&p.values()[2..], &[3.0, 4.0]);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = two_groups();
        let before = p.clone();
        let g = ParamVector::zeros(p.layout().clone());
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut opt = Optimizer::new(kind, &p, GroupRates::uniform(0.1));
            opt.step(&mut p, &g).unwrap();
            assert_eq!(p, before);
        }
    }
}
