use super::blend;
use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, Transition};
use crate::qtable::QTable;
use crate::rng::Rng;

/// Uncorrected n-step update of the first pair of `window` from the
/// observed rewards of the window.
///
/// The window must be a chain of transitions from a single episode: each
/// record starts where the previous one ended and only the last may be
/// terminal.
pub fn nstep_onpolicy_step(q: &mut QTable, window: &[Transition], alpha: f64) -> Result<()> {
    let first = window
        .first()
        .ok_or_else(|| Error::Precondition("empty n-step window".into()))?;
    for pair in window.windows(2) {
        if pair[0].done || pair[0].s_next != pair[1].s {
            return Err(Error::Precondition("n-step window crosses an episode boundary".into()));
        }
    }
    let gamma = q.gamma();
    let mut ret = 0.0;
    let mut discount = 1.0;
    for t in window {
        ret += discount * t.r;
        discount *= gamma;
    }
    let last = window.last().unwrap();
    if !last.done {
        ret += discount * q.max_value(last.s_next);
    }
    blend(q, first.s, first.a, ret, alpha);
    Ok(())
}

/// n-step update whose continuation after `t` is an imagined greedy
/// rollout of `n - 1` steps through the true model.
pub fn nstep_model_step(
    q: &mut QTable,
    t: &Transition,
    mdp: &TabularMdp,
    n: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("rollout length n must be at least 1".into()));
    }
    let gamma = q.gamma();
    let mut ret = t.r;
    let mut discount = gamma;
    let mut s = t.s_next;
    let mut ended = t.done;
    for _ in 1..n {
        if ended {
            break;
        }
        let step = mdp.sample_step(s, q.greedy_action(s), rng)?;
        ret += discount * step.r;
        discount *= gamma;
        s = step.s_next;
        ended = step.done;
    }
    if !ended {
        ret += discount * q.max_value(s);
    }
    blend(q, t.s, t.a, ret, alpha);
    Ok(())
}
