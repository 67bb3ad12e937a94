//! Regression targets from target-network outputs, and the prediction
//! entropy used to regularise the composite heads.
//!
//! All functions take the bootstrap outputs of one or two target critics at
//! `(s', a')`; with two critics every bootstrap quantity is the minimum of
//! the two critics' corresponding quantity.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::matrix::Matrix;
use super::net::Net;
use crate::error::{Error, Result};
use crate::rng::Rng;

fn check_batch(r: &[f64], done: &[bool], next: &[Matrix], cols: usize) -> Result<()> {
    if next.is_empty() || next.len() > 2 {
        return Err(Error::Precondition("one or two target critics required".into()));
    }
    if done.len() != r.len() {
        return Err(Error::Shape {
            expected: r.len(),
            got: done.len(),
        });
    }
    for m in next {
        if m.rows() != r.len() || m.cols() != cols {
            return Err(Error::Shape {
                expected: r.len() * cols,
                got: m.rows() * m.cols(),
            });
        }
    }
    Ok(())
}

#[inline]
fn min_over(next: &[Matrix], i: usize, j: usize) -> f64 {
    next.iter().map(|m| m.get(i, j)).fold(f64::INFINITY, f64::min)
}

/// Composite targets, columns `[trunc_1..n, shift_1..n, q]`:
/// `y_tr_1 = r`, `y_tr_i = r + gamma tr'_{i-1}`, `y_sh_1 = gamma q'`,
/// `y_sh_i = gamma sh'_{i-1}`, `y_q = r + gamma (tr'_n + sh'_n)`.
pub fn composite_targets(r: &[f64], done: &[bool], next: &[Matrix], gamma: f64, n: usize) -> Result<Matrix> {
    let cols = 2 * n + 1;
    check_batch(r, done, next, cols)?;
    let mut y = Matrix::zeros(r.len(), cols);
    for (i, (&ri, &di)) in r.iter().zip(done).enumerate() {
        let boot = |j: usize| if di { 0.0 } else { min_over(next, i, j) };
        let row = y.row_mut(i);
        row[0] = ri;
        row[n] = gamma * boot(2 * n);
        for h in 1..n {
            row[h] = ri + gamma * boot(h - 1);
            row[n + h] = gamma * boot(n + h - 1);
        }
        row[2 * n] = ri + gamma * (boot(n - 1) + boot(2 * n - 1));
    }
    Ok(y)
}

/// Single-output TD3 target `r + gamma min q'`.
pub fn td3_targets(r: &[f64], done: &[bool], next: &[Matrix], gamma: f64) -> Result<Matrix> {
    check_batch(r, done, next, 1)?;
    let mut y = Matrix::zeros(r.len(), 1);
    for (i, (&ri, &di)) in r.iter().zip(done).enumerate() {
        let boot = if di { 0.0 } else { min_over(next, i, 0) };
        y.set(i, 0, ri + gamma * boot);
    }
    Ok(y)
}

/// Delta-head targets: `y_1 = r + gamma_1 Q'_1`,
/// `y_i = (gamma_i - gamma_{i-1}) Q'_{i-1} + gamma_i W'_i`, where
/// `Q'_i = W'_1 + .. + W'_i`. With twin critics the prefix sums and the
/// individual heads are each minimised separately.
pub fn td_delta_targets(r: &[f64], done: &[bool], next: &[Matrix], gammas: &[f64]) -> Result<Matrix> {
    let k = gammas.len();
    check_batch(r, done, next, k)?;
    let mut y = Matrix::zeros(r.len(), k);
    let mut prefix = vec![vec![0.0; k]; next.len()];
    for (i, (&ri, &di)) in r.iter().zip(done).enumerate() {
        for (c, m) in next.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..k {
                acc += m.get(i, j);
                prefix[c][j] = acc;
            }
        }
        let q_min = |j: usize| prefix.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
        let row = y.row_mut(i);
        for j in 0..k {
            row[j] = if j == 0 {
                ri + if di { 0.0 } else { gammas[0] * q_min(0) }
            } else if di {
                0.0
            } else {
                (gammas[j] - gammas[j - 1]) * q_min(j - 1) + gammas[j] * min_over(next, i, j)
            };
        }
    }
    Ok(y)
}

/// Sample variance (divisor `n - 1`) of `trunc_i + shift_i`; `None` for `n < 2`.
fn sum_variance(trunc: &[f64], shift: &[f64]) -> Option<(f64, f64)> {
    let n = trunc.len();
    if n < 2 {
        return None;
    }
    let mean = trunc.iter().zip(shift).map(|(a, b)| a + b).sum::<f64>() / n as f64;
    let var = trunc
        .iter()
        .zip(shift)
        .map(|(a, b)| {
            let d = a + b - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1) as f64;
    Some((mean, var))
}

/// `H = ln(2 pi e max(var, floor)) / 2` over the complete estimates `trunc_i + shift_i`.
pub fn entropy_of_predictions(trunc: &[f64], shift: &[f64], floor: f64) -> f64 {
    let var = sum_variance(trunc, shift).map_or(floor, |(_, v)| v.max(floor));
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln()
}

/// `dH / d(trunc_i + shift_i)`, zero on the floor branch.
pub fn entropy_gradient(trunc: &[f64], shift: &[f64], floor: f64) -> Vec<f64> {
    let n = trunc.len();
    match sum_variance(trunc, shift) {
        Some((mean, var)) if var > floor => trunc
            .iter()
            .zip(shift)
            .map(|(a, b)| (a + b - mean) / ((n - 1) as f64 * var))
            .collect(),
        _ => vec![0.0; n],
    }
}

/// Target-policy smoothing: `clip(mu'(s') + clip(N(0, sigma), -c, c), -bound, bound)`.
pub fn smoothed_target_actions(
    actor_target: &Net,
    s_next: &Matrix,
    sigma: f64,
    clip: f64,
    bound: f64,
    rng: &mut Rng,
) -> Result<Matrix> {
    let mut a = actor_target.forward(s_next)?;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        for v in a.data_mut() {
            let eps: f64 = normal.sample(rng);
            *v = (*v + eps.clamp(-clip, clip)).clamp(-bound, bound);
        }
    }
    Ok(a)
}

/// Gaussian exploration around a deterministic action, clipped to the box.
pub fn explore_action(action: &[f64], sigma: f64, bound: f64, rng: &mut Rng) -> Vec<f64> {
    action
        .iter()
        .map(|&a| {
            // Box-Muller keeps the draw count fixed at two per coordinate.
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            (a + sigma * bound * z).clamp(-bound, bound)
        })
        .collect()
}
