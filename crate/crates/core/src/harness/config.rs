//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment. Every key must appear in
//! [`SCHEMA`]; anything else is rejected before a run starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::chain::{ChainSpec, ChainVariant};
use crate::deep::{AgentKind, OptimizerKind, Td3Config};
use crate::error::{Error, Result};
use crate::rng::RNG_ALGORITHM;
use crate::tabular::{LearnerKind, LearnerParams};

/// Every accepted key with a one-line description.
pub const SCHEMA: &[(&str, &str)] = &[
    ("experiment", "oracle | tabular | deep | sweep | report"),
    ("run_id", "name used in CSV rows and file names"),
    ("seeds", "comma list and/or ranges, e.g. `0..10` or `1, 4, 7`"),
    ("rng", "generator algorithm; only `chacha8`"),
    ("output_dir", "directory for CSV and checkpoint files"),
    ("update_budget", "tabular updates per seed"),
    ("checkpoint_every", "updates between logged checkpoints (default 1000)"),
    ("log.metrics", "comma list of metrics to log (default: all)"),
    ("env.variant", "deterministic | stochastic"),
    ("env.horizon_k", "chain length K"),
    ("env.gamma", "discount (default 1)"),
    ("batch.mode", "fixed | online"),
    ("batch.episodes", "episodes in the fixed batch (default 1000)"),
    ("batch.nonoptimal_frac", "probability of a non-optimal action in the batch (default 0.1)"),
    ("online.epsilon", "exploration rate of online collection (default 0.1)"),
    ("learner.kind", "vanilla | composite | shifted | nstep_onpolicy | nstep_model | td_delta"),
    ("learner.n", "rollout length / truncation horizon (default 4)"),
    ("learner.alpha_q", "rate of the full Q-table"),
    ("learner.alpha_tr", "rate of the truncated tables"),
    ("learner.alpha_sh", "rate of the shifted tables"),
    ("learner.gammas", "comma list of delta discounts, or `schedule:<k>`"),
    ("oracle.n", "horizon of the exported truncated/shifted tables (default 4)"),
    ("oracle.tol", "value-iteration tolerance (default 1e-10)"),
    ("oracle.max_sweeps", "value-iteration sweep cap (default 10^6)"),
    ("sweep.base", "tabular | deep (default tabular)"),
    ("sweep.n", "grid values for learner.n / td3.n"),
    ("sweep.alpha_tr", "grid values for the truncated rate"),
    ("sweep.alpha_sh", "grid values for the shifted rate"),
    ("sweep.beta_tr", "grid values for td3.beta_tr"),
    ("sweep.beta_sh", "grid values for td3.beta_sh"),
    ("sweep.steps_per_sample", "grid values for deep.steps_per_sample"),
    ("agent.kind", "td3 | composite_td3 | td3_delta"),
    ("td3.exploration_sigma", ""),
    ("td3.target_noise_sigma", ""),
    ("td3.target_noise_clip", ""),
    ("td3.policy_delay", ""),
    ("td3.tau", ""),
    ("td3.gamma", ""),
    ("td3.alpha_q", ""),
    ("td3.alpha_tr", ""),
    ("td3.alpha_sh", ""),
    ("td3.alpha_actor", ""),
    ("td3.beta_tr", ""),
    ("td3.beta_sh", ""),
    ("td3.n", ""),
    ("td3.k", "number of delta heads"),
    ("td3.twin_critics", "true | false"),
    ("td3.variance_floor", ""),
    ("td3.rates_multi_step", "alpha_sh used when steps_per_sample > 1 (default: alpha_sh)"),
    ("deep.optimizer", "adam | sgd"),
    ("deep.critic_hidden", "width of every critic hidden layer"),
    ("deep.actor_hidden", "width of both actor hidden layers"),
    ("deep.env_steps", "environment steps per seed"),
    ("deep.warmup_steps", "uniform-random steps before learning starts"),
    ("deep.batch_size", "minibatch size"),
    ("deep.steps_per_sample", "gradient steps per environment step"),
    ("deep.buffer_capacity", "replay capacity"),
    ("deep.eval_every", "environment steps between evaluations"),
    ("deep.eval_episodes", "episodes per evaluation"),
    ("deep.save_params", "write parameter checkpoints (default true)"),
    ("noise.reward_p", "probability of replacing a training reward (default 0)"),
    ("report.candidate", "comma list of run ids"),
    ("report.baseline", "comma list of run ids, paired with report.candidate"),
    ("report.labels", "comma list of row labels (default: candidate run ids)"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Oracle,
    Tabular,
    Deep,
    Sweep,
    Report,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [Self::Oracle, Self::Tabular, Self::Deep, Self::Sweep, Self::Report];

    pub fn name(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Tabular => "tabular",
            Self::Deep => "deep",
            Self::Sweep => "sweep",
            Self::Report => "report",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Fixed,
    Online,
}

/// Raw validated key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config(format!("line {line_no}: expected `key = value`")));
            };
            let key = key.trim();
            let value = value.trim();
            if !SCHEMA.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config(format!("line {line_no}: unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(Error::Config(format!("line {line_no}: empty value for `{key}`")));
            }
            if values.insert(key.to_string(), (line_no, value.to_string())).is_some() {
                return Err(Error::Config(format!("line {line_no}: duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), (0, value.into()));
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.values
            .get(key)
            .map(|(line, v)| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("line {line}: bad value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        let Some((line, v)) = self.values.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<T>()
                    .map_err(|e| Error::Config(format!("line {line}: bad item `{item}` in `{key}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Parses `0..10`, `3`, `1, 4, 7` and mixtures thereof.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        let bad = || Error::Config(format!("bad seed item `{item}`"));
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if b <= a {
                return Err(bad());
            }
            seeds.extend(a..b);
        } else {
            seeds.push(item.parse().map_err(|_| bad())?);
        }
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::Config("duplicate seed".into()));
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub spec: ChainSpec,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub mode: BatchMode,
    pub episodes: usize,
    pub nonoptimal_frac: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepConfig {
    pub agent: AgentKind,
    pub td3: Td3Config,
    /// Shifted-head rate used instead of `td3.alpha_sh` when more than one
    /// gradient step is taken per sample.
    pub alpha_sh_multi_step: Option<f64>,
    pub env_steps: u64,
    pub warmup_steps: u64,
    pub batch_size: usize,
    pub steps_per_sample: u32,
    pub buffer_capacity: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub save_params: bool,
    pub reward_noise: f64,
}

impl DeepConfig {
    /// Agent configuration with the update-regime rate switch applied.
    pub fn effective_td3(&self) -> Td3Config {
        let mut cfg = self.td3.clone();
        if self.steps_per_sample > 1 {
            if let Some(a) = self.alpha_sh_multi_step {
                cfg.alpha_sh = a;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub base: Option<Experiment>,
    pub n: Vec<usize>,
    pub alpha_tr: Vec<f64>,
    pub alpha_sh: Vec<f64>,
    pub beta_tr: Vec<f64>,
    pub beta_sh: Vec<f64>,
    pub steps_per_sample: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub candidate: Vec<String>,
    pub baseline: Vec<String>,
    pub labels: Vec<String>,
}

/// A fully validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub run_id: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub update_budget: u64,
    pub checkpoint_every: u64,
    /// `None` logs every metric.
    pub log_metrics: Option<Vec<String>>,
    pub env: Option<EnvConfig>,
    pub batch: BatchConfig,
    pub learner: Option<LearnerParams>,
    pub oracle_n: usize,
    pub oracle_tol: f64,
    pub oracle_max_sweeps: usize,
    pub deep: Option<DeepConfig>,
    pub sweep: SweepGrid,
    pub report: Option<ReportConfig>,
    pub raw: RawConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_raw(RawConfig::parse(&text)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let experiment: Experiment = raw.required("experiment")?;
        if let Some(r) = raw.get("rng") {
            if r != RNG_ALGORITHM {
                return Err(Error::Config(format!("unsupported rng `{r}`; only `{RNG_ALGORITHM}`")));
            }
        }
        let run_id = raw.get("run_id").unwrap_or(experiment.name()).to_string();
        if run_id.is_empty() || !run_id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            return Err(Error::Config(format!("run_id `{run_id}` may only use [A-Za-z0-9_.-]")));
        }
        let seeds = parse_seeds(raw.get("seeds").unwrap_or("0"))?;
        let output_dir = PathBuf::from(raw.get("output_dir").unwrap_or("out"));
        let checkpoint_every: u64 = raw.or("checkpoint_every", 1000)?;
        if checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        let log_metrics = raw
            .get("log.metrics")
            .map(|v| v.split(',').map(|m| m.trim().to_string()).collect());

        let env = match raw.get("env.variant") {
            None => None,
            Some(v) => {
                let variant = match v {
                    "deterministic" => ChainVariant::Deterministic,
                    "stochastic" => ChainVariant::Stochastic,
                    _ => return Err(Error::Config(format!("unknown env.variant `{v}`"))),
                };
                let spec = ChainSpec {
                    horizon_k: raw.required("env.horizon_k")?,
                    variant,
                };
                let gamma: f64 = raw.or("env.gamma", 1.0)?;
                spec.build(gamma)?;
                Some(EnvConfig { spec, gamma })
            }
        };

        let mode = match raw.get("batch.mode").unwrap_or("fixed") {
            "fixed" => BatchMode::Fixed,
            "online" => BatchMode::Online,
            m => return Err(Error::Config(format!("unknown batch.mode `{m}`"))),
        };
        let batch = BatchConfig {
            mode,
            episodes: raw.or("batch.episodes", 1000)?,
            nonoptimal_frac: raw.or("batch.nonoptimal_frac", 0.1)?,
            epsilon: raw.or("online.epsilon", 0.1)?,
        };
        if !(0.0..=1.0).contains(&batch.nonoptimal_frac) || !(0.0..=1.0).contains(&batch.epsilon) {
            return Err(Error::Config("batch.nonoptimal_frac and online.epsilon must be in [0, 1]".into()));
        }

        let learner = match raw.get("learner.kind") {
            None => None,
            Some(_) => Some(Self::learner(&raw, env.as_ref())?),
        };
        let deep = match raw.get("agent.kind") {
            None => None,
            Some(_) => Some(Self::deep(&raw)?),
        };
        let sweep = SweepGrid {
            base: raw.parsed("sweep.base")?,
            n: raw.list("sweep.n")?.unwrap_or_default(),
            alpha_tr: raw.list("sweep.alpha_tr")?.unwrap_or_default(),
            alpha_sh: raw.list("sweep.alpha_sh")?.unwrap_or_default(),
            beta_tr: raw.list("sweep.beta_tr")?.unwrap_or_default(),
            beta_sh: raw.list("sweep.beta_sh")?.unwrap_or_default(),
            steps_per_sample: raw.list("sweep.steps_per_sample")?.unwrap_or_default(),
        };
        let report = match raw.list::<String>("report.candidate")? {
            None => None,
            Some(candidate) => {
                let baseline: Vec<String> = raw
                    .list("report.baseline")?
                    .ok_or_else(|| Error::Config("report.candidate needs report.baseline".into()))?;
                if baseline.len() != candidate.len() {
                    return Err(Error::Config("report.candidate and report.baseline differ in length".into()));
                }
                let labels = raw.list("report.labels")?.unwrap_or_else(|| candidate.clone());
                if labels.len() != candidate.len() {
                    return Err(Error::Config("report.labels differs in length from report.candidate".into()));
                }
                Some(ReportConfig {
                    candidate,
                    baseline,
                    labels,
                })
            }
        };

        let cfg = Self {
            experiment,
            run_id,
            seeds,
            output_dir,
            update_budget: raw.or("update_budget", 0)?,
            checkpoint_every,
            log_metrics,
            env,
            batch,
            learner,
            oracle_n: raw.or("oracle.n", 4)?,
            oracle_tol: raw.or("oracle.tol", crate::oracle::DEFAULT_TOL)?,
            oracle_max_sweeps: raw.or("oracle.max_sweeps", crate::oracle::DEFAULT_MAX_SWEEPS)?,
            deep,
            sweep,
            report,
            raw,
        };
        cfg.check_experiment()?;
        Ok(cfg)
    }

    fn learner(raw: &RawConfig, env: Option<&EnvConfig>) -> Result<LearnerParams> {
        let kind: LearnerKind = raw.required("learner.kind")?;
        let alpha_q: f64 = raw.required("learner.alpha_q")?;
        let gammas = match raw.get("learner.gammas") {
            None => Vec::new(),
            Some(v) => match v.strip_prefix("schedule:") {
                Some(k) => {
                    let k: usize = k
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad learner.gammas `{v}`")))?;
                    let cap = env.map_or(0.99, |e| e.gamma.min(0.99));
                    crate::tabular::gamma_schedule(k, cap)
                }
                None => raw.list("learner.gammas")?.unwrap_or_default(),
            },
        };
        if kind == LearnerKind::TdDelta && gammas.is_empty() {
            return Err(Error::Config("learner.kind = td_delta needs learner.gammas".into()));
        }
        Ok(LearnerParams {
            kind,
            n: raw.or("learner.n", 4)?,
            alpha_q,
            alpha_tr: raw.or("learner.alpha_tr", alpha_q)?,
            alpha_sh: raw.or("learner.alpha_sh", alpha_q)?,
            gammas,
        })
    }

    fn deep(raw: &RawConfig) -> Result<DeepConfig> {
        let d = Td3Config::default();
        let td3 = Td3Config {
            exploration_sigma: raw.or("td3.exploration_sigma", d.exploration_sigma)?,
            target_noise_sigma: raw.or("td3.target_noise_sigma", d.target_noise_sigma)?,
            target_noise_clip: raw.or("td3.target_noise_clip", d.target_noise_clip)?,
            policy_delay: raw.or("td3.policy_delay", d.policy_delay)?,
            tau: raw.or("td3.tau", d.tau)?,
            gamma: raw.or("td3.gamma", d.gamma)?,
            alpha_q: raw.or("td3.alpha_q", d.alpha_q)?,
            alpha_tr: raw.or("td3.alpha_tr", d.alpha_tr)?,
            alpha_sh: raw.or("td3.alpha_sh", d.alpha_sh)?,
            alpha_actor: raw.or("td3.alpha_actor", d.alpha_actor)?,
            beta_tr: raw.or("td3.beta_tr", d.beta_tr)?,
            beta_sh: raw.or("td3.beta_sh", d.beta_sh)?,
            n: raw.or("td3.n", d.n)?,
            k: raw.or("td3.k", d.k)?,
            twin_critics: raw.or("td3.twin_critics", d.twin_critics)?,
            variance_floor: raw.or("td3.variance_floor", d.variance_floor)?,
            optimizer: raw.or::<OptimizerKind>("deep.optimizer", d.optimizer)?,
            critic_hidden: raw.or("deep.critic_hidden", d.critic_hidden)?,
            actor_hidden: raw.or("deep.actor_hidden", d.actor_hidden)?,
        };
        td3.validate()?;
        let deep = DeepConfig {
            agent: raw.required("agent.kind")?,
            td3,
            alpha_sh_multi_step: raw.parsed("td3.rates_multi_step")?,
            env_steps: raw.required("deep.env_steps")?,
            warmup_steps: raw.or("deep.warmup_steps", 1000)?,
            batch_size: raw.or("deep.batch_size", 100)?,
            steps_per_sample: raw.or("deep.steps_per_sample", 1)?,
            buffer_capacity: raw.or("deep.buffer_capacity", 1_000_000)?,
            eval_every: raw.or("deep.eval_every", 5000)?,
            eval_episodes: raw.or("deep.eval_episodes", 20)?,
            save_params: raw.or("deep.save_params", true)?,
            reward_noise: raw.or("noise.reward_p", 0.0)?,
        };
        if deep.batch_size == 0 || deep.steps_per_sample == 0 || deep.eval_every == 0 || deep.eval_episodes == 0 {
            return Err(Error::Config(
                "deep.batch_size, deep.steps_per_sample, deep.eval_every and deep.eval_episodes must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&deep.reward_noise) {
            return Err(Error::Config("noise.reward_p must be in [0, 1]".into()));
        }
        Ok(deep)
    }

    fn check_experiment(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("experiment `{}` needs {what}", self.experiment)))
            }
        };
        match self.experiment {
            Experiment::Oracle => need(self.env.is_some(), "env.variant and env.horizon_k"),
            Experiment::Tabular => {
                need(self.env.is_some(), "env.variant and env.horizon_k")?;
                need(self.learner.is_some(), "learner.kind and learner.alpha_q")?;
                need(self.update_budget > 0, "a positive update_budget")
            }
            Experiment::Deep => need(self.deep.is_some(), "agent.kind and deep.env_steps"),
            Experiment::Sweep => match self.sweep.base.unwrap_or(Experiment::Tabular) {
                Experiment::Tabular => {
                    need(self.env.is_some(), "env.variant and env.horizon_k")?;
                    need(self.learner.is_some(), "learner.kind and learner.alpha_q")?;
                    need(self.update_budget > 0, "a positive update_budget")
                }
                Experiment::Deep => need(self.deep.is_some(), "agent.kind and deep.env_steps"),
                other => Err(Error::Config(format!("sweep.base cannot be `{other}`"))),
            },
            Experiment::Report => need(self.report.is_some(), "report.candidate and report.baseline"),
        }
    }

    /// Whether `metric` should be written.
    pub fn logs(&self, metric: &str) -> bool {
        self.log_metrics.as_ref().is_none_or(|m| m.iter().any(|x| x == metric))
    }
}
