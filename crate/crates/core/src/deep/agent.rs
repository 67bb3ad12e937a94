use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use super::matrix::Matrix;
use super::net::{Activation, MlpSpec, Net, Tape};
use super::optim::{Optimizer, OptimizerKind};
use super::params::{polyak_update, GroupRates, ParamGroup, ParamVector};
use super::targets::{
    composite_targets, entropy_gradient, entropy_of_predictions, explore_action, smoothed_target_actions,
    td3_targets, td_delta_targets,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tabular::gamma_schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Td3,
    CompositeTd3,
    Td3Delta,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [Self::Td3, Self::CompositeTd3, Self::Td3Delta];

    pub fn name(self) -> &'static str {
        match self {
            Self::Td3 => "td3",
            Self::CompositeTd3 => "composite_td3",
            Self::Td3Delta => "td3_delta",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Config {
    pub exploration_sigma: f64,
    pub target_noise_sigma: f64,
    pub target_noise_clip: f64,
    pub policy_delay: u64,
    pub tau: f64,
    pub gamma: f64,
    pub alpha_q: f64,
    pub alpha_tr: f64,
    pub alpha_sh: f64,
    pub alpha_actor: f64,
    pub beta_tr: f64,
    pub beta_sh: f64,
    /// Truncation horizon of the composite critic.
    pub n: usize,
    /// Number of delta heads.
    pub k: usize,
    pub twin_critics: bool,
    pub variance_floor: f64,
    pub optimizer: OptimizerKind,
    pub critic_hidden: usize,
    pub actor_hidden: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            exploration_sigma: 0.15,
            target_noise_sigma: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            tau: 5e-3,
            gamma: 0.99,
            alpha_q: 1e-3,
            alpha_tr: 6e-5,
            alpha_sh: 5e-3,
            alpha_actor: 1e-3,
            beta_tr: 0.002,
            beta_sh: 0.001,
            n: 4,
            k: 4,
            twin_critics: true,
            variance_floor: 1e-6,
            optimizer: OptimizerKind::Adam,
            critic_hidden: 64,
            actor_hidden: 64,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("td3.tau = {} not in (0, 1]", self.tau));
        }
        for (name, v) in [
            ("exploration_sigma", self.exploration_sigma),
            ("target_noise_sigma", self.target_noise_sigma),
            ("target_noise_clip", self.target_noise_clip),
            ("alpha_q", self.alpha_q),
            ("alpha_tr", self.alpha_tr),
            ("alpha_sh", self.alpha_sh),
            ("alpha_actor", self.alpha_actor),
            ("beta_tr", self.beta_tr),
            ("beta_sh", self.beta_sh),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("td3.{name} = {v} must be a finite non-negative number"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("td3.gamma = {} not in [0, 1]", self.gamma));
        }
        if self.n == 0 || self.k == 0 || self.policy_delay == 0 {
            return bad("td3.n, td3.k and td3.policy_delay must be at least 1".into());
        }
        if self.variance_floor <= 0.0 {
            return bad("td3.variance_floor must be positive".into());
        }
        if self.critic_hidden == 0 || self.actor_hidden == 0 {
            return bad("hidden sizes must be positive".into());
        }
        Ok(())
    }

    /// Discounts of the delta heads, capped at `gamma`.
    pub fn delta_gammas(&self) -> Vec<f64> {
        gamma_schedule(self.k, self.gamma)
    }
}

/// Critic input `s ⊕ a` → outputs for the given agent.
pub fn build_critic(kind: AgentKind, cfg: &Td3Config, input_dim: usize) -> Result<Net> {
    let h = cfg.critic_hidden;
    let spec = |out| MlpSpec {
        layer_sizes: vec![input_dim, h, h, out],
        hidden_activation: Activation::LeakyRelu,
        output_activation: Activation::Identity,
    };
    match kind {
        AgentKind::Td3 => Net::mlp(&spec(1), ParamGroup::Trunk, Some(ParamGroup::QHead)),
        AgentKind::Td3Delta => Net::mlp(&spec(cfg.k), ParamGroup::Trunk, Some(ParamGroup::QHead)),
        AgentKind::CompositeTd3 => Net::composite_critic(input_dim, h, cfg.n),
    }
}

pub fn build_actor(cfg: &Td3Config, obs_dim: usize, act_dim: usize, bound: f64) -> Result<Net> {
    let h = cfg.actor_hidden;
    Net::mlp(
        &MlpSpec {
            layer_sizes: vec![obs_dim, h, h, act_dim],
            hidden_activation: Activation::Relu,
            output_activation: Activation::TanhScaled(bound),
        },
        ParamGroup::Actor,
        None,
    )
}

pub fn critic_rates(kind: AgentKind, cfg: &Td3Config) -> GroupRates {
    let base = GroupRates::uniform(cfg.alpha_q);
    match kind {
        AgentKind::CompositeTd3 => base
            .with(ParamGroup::TruncHeads, cfg.alpha_tr)
            .with(ParamGroup::ShiftHeads, cfg.alpha_sh),
        _ => base,
    }
}

/// Output columns whose sum is the full action-value.
pub fn q_columns(kind: AgentKind, cfg: &Td3Config) -> std::ops::Range<usize> {
    match kind {
        AgentKind::Td3 => 0..1,
        AgentKind::CompositeTd3 => 2 * cfg.n..2 * cfg.n + 1,
        AgentKind::Td3Delta => 0..cfg.k,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticStats {
    /// `(1/m) sum_j sum_o (Q - y)^2 / 2`
    pub loss: f64,
    /// Mean absolute TD error per output column.
    pub mean_abs_td: Vec<f64>,
    /// Batch mean of the prediction entropy (composite critic only).
    pub entropy: f64,
    pub max_abs_target: f64,
}

/// Squared-error loss and batch-mean entropy of a critic; the scalar
/// objectives behind [`critic_gradient`].
pub fn critic_objectives(net: &Net, kind: AgentKind, cfg: &Td3Config, x: &Matrix, y: &Matrix) -> Result<(f64, f64)> {
    let out = net.forward(x)?;
    let m = x.rows() as f64;
    let mse = out
        .data()
        .iter()
        .zip(y.data())
        .map(|(q, t)| 0.5 * (q - t) * (q - t))
        .sum::<f64>()
        / m;
    let entropy = if kind == AgentKind::CompositeTd3 {
        let n = cfg.n;
        (0..out.rows())
            .map(|i| {
                let row = out.row(i);
                entropy_of_predictions(&row[..n], &row[n..2 * n], cfg.variance_floor)
            })
            .sum::<f64>()
            / m
    } else {
        0.0
    };
    Ok((mse, entropy))
}

/// Gradient of the per-group critic objective. Every parameter descends
/// the squared error; truncated-head output parameters additionally
/// descend `beta_tr * H` and shifted-head output parameters ascend
/// `beta_sh * H`.
pub fn critic_gradient(
    net: &Net,
    kind: AgentKind,
    cfg: &Td3Config,
    x: &Matrix,
    y: &Matrix,
) -> Result<(ParamVector, CriticStats)> {
    let tape = net.forward_tape(x)?;
    let out = &tape.output;
    if y.rows() != out.rows() || y.cols() != out.cols() {
        return Err(Error::Shape {
            expected: out.rows() * out.cols(),
            got: y.rows() * y.cols(),
        });
    }
    let m = out.rows();
    let inv_m = 1.0 / m as f64;
    let mut cot = Matrix::zeros(m, out.cols());
    let mut loss = 0.0;
    let mut mean_abs_td = vec![0.0; out.cols()];
    for ((c, (&q, &t)), j) in cot
        .data_mut()
        .iter_mut()
        .zip(out.data().iter().zip(y.data()))
        .zip((0..out.cols()).cycle())
    {
        let d = q - t;
        *c = d * inv_m;
        loss += 0.5 * d * d * inv_m;
        mean_abs_td[j] += d.abs() * inv_m;
    }
    let max_abs_target = y.data().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let (mut grad, _) = net.backward(&tape, &cot)?;

    let mut entropy = 0.0;
    if kind == AgentKind::CompositeTd3 {
        entropy = add_entropy_gradient(net, &tape, cfg, &mut grad);
    }
    Ok((
        grad,
        CriticStats {
            loss,
            mean_abs_td,
            entropy,
            max_abs_target,
        },
    ))
}

fn add_entropy_gradient(net: &Net, tape: &Tape, cfg: &Td3Config, grad: &mut ParamVector) -> f64 {
    let n = cfg.n;
    let out = &tape.output;
    let m = out.rows();
    let mut dh = Matrix::zeros(m, n);
    let mut total = 0.0;
    for i in 0..m {
        let row = out.row(i);
        let (tr, sh) = (&row[..n], &row[n..2 * n]);
        total += entropy_of_predictions(tr, sh, cfg.variance_floor);
        dh.row_mut(i).copy_from_slice(&entropy_gradient(tr, sh, cfg.variance_floor));
    }
    let inv_m = 1.0 / m as f64;
    let trunc = net.layer_index("trunc").expect("composite critic has a trunc layer");
    let shift = net.layer_index("shift").expect("composite critic has a shift layer");
    if cfg.beta_tr != 0.0 {
        net.add_layer_grad(tape, trunc, &dh, cfg.beta_tr * inv_m, grad);
    }
    if cfg.beta_sh != 0.0 {
        net.add_layer_grad(tape, shift, &dh, -cfg.beta_sh * inv_m, grad);
    }
    total * inv_m
}

/// Mean of the critic's full action-value at `(s, actor(s))`.
pub fn actor_objective(actor: &Net, critic: &Net, kind: AgentKind, cfg: &Td3Config, s: &Matrix) -> Result<f64> {
    let a = actor.forward(s)?;
    let q = critic.forward(&s.hcat(&a)?)?;
    let cols = q_columns(kind, cfg);
    Ok((0..q.rows()).map(|i| q.row(i)[cols.clone()].iter().sum::<f64>()).sum::<f64>() / q.rows() as f64)
}

/// Gradient of `-actor_objective` with respect to the actor parameters.
pub fn actor_gradient(actor: &Net, critic: &Net, kind: AgentKind, cfg: &Td3Config, s: &Matrix) -> Result<ParamVector> {
    let a_tape = actor.forward_tape(s)?;
    let x = s.hcat(&a_tape.output)?;
    let c_tape = critic.forward_tape(&x)?;
    let m = s.rows();
    let mut cot = Matrix::zeros(m, critic.output_dim());
    for i in 0..m {
        for j in q_columns(kind, cfg) {
            cot.set(i, j, -1.0 / m as f64);
        }
    }
    let (_, dx) = critic.backward(&c_tape, &cot)?;
    let da = dx.columns(s.cols(), x.cols());
    let (grad, _) = actor.backward(&a_tape, &da)?;
    Ok(grad)
}

/// Minibatch of continuous transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousBatch {
    pub s: Matrix,
    pub a: Matrix,
    pub r: Vec<f64>,
    pub s_next: Matrix,
    pub done: Vec<bool>,
}

/// Fixed-capacity ring buffer of continuous transitions.
#[derive(Debug, Clone)]
pub struct ContinuousReplay {
    obs_dim: usize,
    act_dim: usize,
    capacity: usize,
    len: usize,
    head: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    s_next: Vec<f64>,
    done: Vec<bool>,
}

impl ContinuousReplay {
    pub fn new(obs_dim: usize, act_dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            obs_dim,
            act_dim,
            capacity,
            len: 0,
            head: 0,
            s: vec![0.0; capacity * obs_dim],
            a: vec![0.0; capacity * act_dim],
            r: vec![0.0; capacity],
            s_next: vec![0.0; capacity * obs_dim],
            done: vec![false; capacity],
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, s: &[f64], a: &[f64], r: f64, s_next: &[f64], done: bool) {
        let i = self.head;
        let (o, k) = (self.obs_dim, self.act_dim);
        self.s[i * o..(i + 1) * o].copy_from_slice(s);
        self.a[i * k..(i + 1) * k].copy_from_slice(a);
        self.r[i] = r;
        self.s_next[i * o..(i + 1) * o].copy_from_slice(s_next);
        self.done[i] = done;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// `m` uniform draws with replacement.
    pub fn sample(&self, m: usize, rng: &mut Rng) -> Result<ContinuousBatch> {
        if self.len == 0 {
            return Err(Error::EmptyBuffer);
        }
        if m == 0 {
            return Err(Error::Precondition("batch size must be positive".into()));
        }
        let (o, k) = (self.obs_dim, self.act_dim);
        let mut batch = ContinuousBatch {
            s: Matrix::zeros(m, o),
            a: Matrix::zeros(m, k),
            r: Vec::with_capacity(m),
            s_next: Matrix::zeros(m, o),
            done: Vec::with_capacity(m),
        };
        for j in 0..m {
            let i = rng.random_range(0..self.len);
            batch.s.row_mut(j).copy_from_slice(&self.s[i * o..(i + 1) * o]);
            batch.a.row_mut(j).copy_from_slice(&self.a[i * k..(i + 1) * k]);
            batch.s_next.row_mut(j).copy_from_slice(&self.s_next[i * o..(i + 1) * o]);
            batch.r.push(self.r[i]);
            batch.done.push(self.done[i]);
        }
        Ok(batch)
    }
}

/// TD3-style actor-critic agent with one of three critic types.
#[derive(Debug, Clone)]
pub struct Agent {
    pub kind: AgentKind,
    pub cfg: Td3Config,
    pub bound: f64,
    pub actor: Net,
    pub actor_target: Net,
    pub critics: Vec<Net>,
    pub critic_targets: Vec<Net>,
    actor_opt: Optimizer,
    critic_opts: Vec<Optimizer>,
    critic_steps: u64,
}

impl Agent {
    pub fn new(kind: AgentKind, cfg: Td3Config, obs_dim: usize, act_dim: usize, bound: f64, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut actor = build_actor(&cfg, obs_dim, act_dim, bound)?;
        actor.init_uniform(rng);
        let count = if cfg.twin_critics { 2 } else { 1 };
        let mut critics = Vec::with_capacity(count);
        for _ in 0..count {
            let mut c = build_critic(kind, &cfg, obs_dim + act_dim)?;
            c.init_uniform(rng);
            critics.push(c);
        }
        let rates = critic_rates(kind, &cfg);
        let critic_opts = critics.iter().map(|c| Optimizer::new(cfg.optimizer, &c.params, rates)).collect();
        let actor_opt = Optimizer::new(cfg.optimizer, &actor.params, GroupRates::uniform(cfg.alpha_actor));
        Ok(Self {
            kind,
            bound,
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
            actor_opt,
            critic_opts,
            critic_steps: 0,
            cfg,
        })
    }

    pub fn critic_steps(&self) -> u64 {
        self.critic_steps
    }

    /// Deterministic actions for a batch of observations.
    pub fn act(&self, obs: &Matrix) -> Result<Matrix> {
        self.actor.forward(obs)
    }

    pub fn explore(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let a = self.act(&Matrix::from_vec(1, obs.len(), obs.to_vec())?)?;
        Ok(explore_action(a.row(0), self.cfg.exploration_sigma, self.bound, rng))
    }

    /// Regression targets for a batch from the target networks.
    pub fn targets(&self, batch: &ContinuousBatch, rng: &mut Rng) -> Result<Matrix> {
        let cfg = &self.cfg;
        let a_next = smoothed_target_actions(
            &self.actor_target,
            &batch.s_next,
            cfg.target_noise_sigma,
            cfg.target_noise_clip,
            self.bound,
            rng,
        )?;
        let x_next = batch.s_next.hcat(&a_next)?;
        let next = self
            .critic_targets
            .iter()
            .map(|c| c.forward(&x_next))
            .collect::<Result<Vec<_>>>()?;
        match self.kind {
            AgentKind::Td3 => td3_targets(&batch.r, &batch.done, &next, cfg.gamma),
            AgentKind::CompositeTd3 => composite_targets(&batch.r, &batch.done, &next, cfg.gamma, cfg.n),
            AgentKind::Td3Delta => td_delta_targets(&batch.r, &batch.done, &next, &cfg.delta_gammas()),
        }
    }

    /// One critic update of every critic; every `policy_delay`-th call also
    /// updates the actor and moves all target networks. Returns the
    /// statistics of the first critic.
    pub fn train_step(&mut self, batch: &ContinuousBatch, rng: &mut Rng) -> Result<CriticStats> {
        let y = self.targets(batch, rng)?;
        let x = batch.s.hcat(&batch.a)?;
        let mut first = None;
        for (critic, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            let (grad, stats) = critic_gradient(critic, self.kind, &self.cfg, &x, &y)?;
            if !stats.loss.is_finite() || !grad.values().iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite {
                    step: self.critic_steps,
                    max_abs_target: stats.max_abs_target,
                });
            }
            opt.step(&mut critic.params, &grad)?;
            first.get_or_insert(stats);
        }
        self.critic_steps += 1;
        if self.critic_steps.is_multiple_of(self.cfg.policy_delay) {
            let grad = actor_gradient(&self.actor, &self.critics[0], self.kind, &self.cfg, &batch.s)?;
            self.actor_opt.step(&mut self.actor.params, &grad)?;
            let tau = self.cfg.tau;
            polyak_update(&mut self.actor_target.params, &self.actor.params, tau)?;
            for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
                polyak_update(&mut t.params, &c.params, tau)?;
            }
        }
        Ok(first.expect("at least one critic"))
    }
}
