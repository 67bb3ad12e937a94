use rayon::prelude::*;

use super::config::{BatchMode, RunConfig};
use super::metrics::{auc_from_errors, CsvWriter};
use crate::chain::{generate_batch, ACTION_A};
use crate::error::{Error, Result};
use crate::mdp::{ReplayBuffer, TabularMdp};
use crate::oracle::value_iteration_capped;
use crate::qtable::{greedy_policy, policies_agree, Policy, QTable};
use crate::rng::{seeded_stream, stream};
use crate::tabular::{epsilon_greedy, Learner, LearnerParams};

/// Outcome of one tabular seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSummary {
    pub seed: u64,
    pub convergence_step: Option<u64>,
    pub final_q_s0_a: f64,
    pub final_rel_err: f64,
    pub auc: f64,
    pub checkpoints: u64,
}

/// Runs every configured seed in parallel and writes one CSV per seed.
pub fn run_tabular(cfg: &RunConfig) -> Result<Vec<TabularSummary>> {
    let env = cfg.env.as_ref().ok_or_else(|| Error::Config("tabular run needs env keys".into()))?;
    let params = cfg.learner.as_ref().ok_or_else(|| Error::Config("tabular run needs learner keys".into()))?;
    let mdp = env.spec.build(env.gamma)?;
    let q_star = value_iteration_capped(&mdp, cfg.oracle_tol, cfg.oracle_max_sweeps)?;
    let optimal = greedy_policy(&q_star);
    // Reject bad learner settings before spawning seeds.
    Learner::new(params, &mdp)?;
    cfg.seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, &mdp, params, &q_star, &optimal, seed))
        .collect()
}

fn run_seed(
    cfg: &RunConfig,
    mdp: &TabularMdp,
    params: &LearnerParams,
    q_star: &QTable,
    optimal: &Policy,
    seed: u64,
) -> Result<TabularSummary> {
    let env = cfg.env.as_ref().expect("checked by caller");
    let s0 = mdp.initial_state();
    let reference = q_star.get(s0, ACTION_A);
    let mut learner = Learner::new(params, mdp)?;
    let mut train = seeded_stream(seed, stream::TRAIN);
    let mut out = CsvWriter::create(&cfg.output_dir, &cfg.run_id, seed)?;
    let mut indicator_since: Option<u64> = None;
    let mut rel_errors = Vec::new();
    let mut last = (f64::NAN, f64::NAN);

    let mut checkpoint = |step: u64, learner: &Learner| -> Result<()> {
        let q = learner.q();
        let value = q.get(s0, ACTION_A);
        if !value.is_finite() {
            return Err(Error::NonFinite {
                step,
                max_abs_target: q.values().iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            });
        }
        let rel = relative_error(value, reference);
        let greedy_ok = policies_agree(mdp, &greedy_policy(&q), optimal);
        if greedy_ok {
            indicator_since.get_or_insert(step);
        } else {
            indicator_since = None;
        }
        rel_errors.push(rel);
        last = (value, rel);
        if cfg.logs("q_s0_a") {
            out.row(step, "q_s0_a", value)?;
        }
        if cfg.logs("rel_err") {
            out.row(step, "rel_err", rel)?;
        }
        if cfg.logs("greedy_optimal") {
            out.row(step, "greedy_optimal", if greedy_ok { 1.0 } else { 0.0 })?;
        }
        for (name, v) in learner.aux_metrics(s0, ACTION_A) {
            if cfg.logs(&name) {
                out.row(step, &name, v)?;
            }
        }
        out.flush()
    };

    let budget = cfg.update_budget;
    let every = cfg.checkpoint_every;
    match cfg.batch.mode {
        BatchMode::Fixed => {
            let batch = generate_batch(
                mdp,
                cfg.batch.episodes,
                cfg.batch.nonoptimal_frac,
                &env.spec.optimal_policy(),
                &mut seeded_stream(seed, stream::BATCH),
            )?;
            for step in 1..=budget {
                let i = batch.sample_index(&mut train)?;
                learner.update(&batch, i, mdp, &mut train)?;
                if step % every == 0 || step == budget {
                    checkpoint(step, &learner)?;
                }
            }
        }
        BatchMode::Online => {
            let mut env_rng = seeded_stream(seed, stream::ENV);
            let cap = 10 * mdp.num_states();
            let mut episode = ReplayBuffer::new();
            let mut s = s0;
            for step in 1..=budget {
                if mdp.is_terminal(s) || episode.len() >= cap {
                    s = s0;
                    episode = ReplayBuffer::new();
                }
                let a = epsilon_greedy(&learner.q(), s, cfg.batch.epsilon, &mut train);
                let t = mdp.sample_step(s, a, &mut env_rng)?;
                episode.push(t)?;
                learner.update(&episode, episode.len() - 1, mdp, &mut train)?;
                s = t.s_next;
                if step % every == 0 || step == budget {
                    checkpoint(step, &learner)?;
                }
            }
        }
    }
    Ok(TabularSummary {
        seed,
        convergence_step: indicator_since,
        final_q_s0_a: last.0,
        final_rel_err: last.1,
        auc: auc_from_errors(&rel_errors),
        checkpoints: rel_errors.len() as u64,
    })
}

/// `|value - reference| / |reference|`, or the absolute error when the
/// reference is zero.
pub fn relative_error(value: f64, reference: f64) -> f64 {
    let d = (value - reference).abs();
    if reference == 0.0 {
        d
    } else {
        d / reference.abs()
    }
}

/// State `s_0` action-value of the oracle, for reporting.
pub fn reference_value(cfg: &RunConfig) -> Result<f64> {
    let env = cfg.env.as_ref().ok_or_else(|| Error::Config("needs env keys".into()))?;
    let mdp = env.spec.build(env.gamma)?;
    Ok(value_iteration_capped(&mdp, cfg.oracle_tol, cfg.oracle_max_sweeps)?.get(mdp.initial_state(), ACTION_A))
}
