//! A small continuous control task: move a point to the origin.
//!
//! State and action are both 2-D. Each step moves the point by
//! `0.05 * a` (clipped to the unit box) and pays `-|p'|`. Episodes last 100
//! steps and never terminate early, so the end of an episode is a time limit
//! rather than a terminal state.

use rand::Rng as _;

use super::matrix::Matrix;
use crate::error::Result;
use crate::rng::Rng;

pub const OBS_DIM: usize = 2;
pub const ACT_DIM: usize = 2;
pub const ACTION_BOUND: f64 = 1.0;
pub const STEP_SIZE: f64 = 0.05;
pub const EPISODE_LEN: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PointReachEnv {
    pos: [f64; 2],
    t: usize,
    clipped_actions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub obs: [f64; 2],
    pub reward: f64,
    /// The episode's step limit has been reached.
    pub done: bool,
}

impl Default for PointReachEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl PointReachEnv {
    pub fn new() -> Self {
        Self {
            pos: [0.0; 2],
            t: 0,
            clipped_actions: 0,
        }
    }

    /// Starts an episode at a uniform position in the box (two draws).
    pub fn reset(&mut self, rng: &mut Rng) -> [f64; 2] {
        let p = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        self.reset_to(p)
    }

    pub fn reset_to(&mut self, p: [f64; 2]) -> [f64; 2] {
        self.pos = [p[0].clamp(-1.0, 1.0), p[1].clamp(-1.0, 1.0)];
        self.t = 0;
        self.pos
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    /// Number of actions that had to be clipped into the box.
    pub fn clipped_actions(&self) -> u64 {
        self.clipped_actions
    }

    pub fn step(&mut self, a: &[f64]) -> EnvStep {
        let mut clipped = false;
        for i in 0..2 {
            let ai = if a[i].is_nan() { 0.0 } else { a[i] };
            let c = ai.clamp(-ACTION_BOUND, ACTION_BOUND);
            clipped |= c != a[i];
            self.pos[i] = (self.pos[i] + STEP_SIZE * c).clamp(-1.0, 1.0);
        }
        if clipped {
            self.clipped_actions += 1;
        }
        self.t += 1;
        EnvStep {
            obs: self.pos,
            reward: -norm(self.pos),
            done: self.t >= EPISODE_LEN,
        }
    }
}

#[inline]
fn norm(p: [f64; 2]) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

/// With probability `p` replaces `r` by a uniform draw from `[-1, 1]`.
/// Always consumes one draw; replacing consumes a second one.
pub fn noisy_reward(r: f64, p: f64, rng: &mut Rng) -> f64 {
    let u: f64 = rng.random();
    if u < p {
        rng.random_range(-1.0..=1.0)
    } else {
        r
    }
}

/// Hand-written reference controller: head straight for the origin at full
/// speed, landing on it exactly once within one step.
pub fn scripted_action(p: [f64; 2]) -> [f64; 2] {
    let d = norm(p).max(STEP_SIZE);
    [-p[0] / d, -p[1] / d]
}

/// Start positions for evaluation episodes.
pub fn eval_starts(episodes: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    let mut env = PointReachEnv::new();
    (0..episodes).map(|_| env.reset(rng)).collect()
}

/// Returns of full episodes from the given starts under a batched policy
/// (one row of observations in, one row of actions out).
pub fn evaluate_policy(starts: &[[f64; 2]], mut policy: impl FnMut(&Matrix) -> Result<Matrix>) -> Result<Vec<f64>> {
    let mut envs: Vec<PointReachEnv> = starts
        .iter()
        .map(|&p| {
            let mut e = PointReachEnv::new();
            e.reset_to(p);
            e
        })
        .collect();
    let mut returns = vec![0.0; envs.len()];
    let mut obs = Matrix::zeros(envs.len(), OBS_DIM);
    for _ in 0..EPISODE_LEN {
        for (i, e) in envs.iter().enumerate() {
            obs.row_mut(i).copy_from_slice(&e.position());
        }
        let actions = policy(&obs)?;
        for (i, e) in envs.iter_mut().enumerate() {
            returns[i] += e.step(actions.row(i)).reward;
        }
    }
    Ok(returns)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean return of the scripted controller and of doing nothing, over the
/// same starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnBaselines {
    pub oracle: f64,
    pub zero: f64,
}

impl ReturnBaselines {
    pub fn compute(starts: &[[f64; 2]]) -> Result<Self> {
        let oracle = evaluate_policy(starts, |obs| {
            let mut a = Matrix::zeros(obs.rows(), ACT_DIM);
            for i in 0..obs.rows() {
                let s = scripted_action([obs.get(i, 0), obs.get(i, 1)]);
                a.row_mut(i).copy_from_slice(&s);
            }
            Ok(a)
        })?;
        let zero = evaluate_policy(starts, |obs| Ok(Matrix::zeros(obs.rows(), ACT_DIM)))?;
        Ok(Self {
            oracle: mean(&oracle),
            zero: mean(&zero),
        })
    }

    /// 0 for the idle policy, 1 for the scripted controller.
    pub fn score(&self, ret: f64) -> f64 {
        (ret - self.zero) / (self.oracle - self.zero)
    }
}
