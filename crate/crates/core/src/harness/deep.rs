use rand::Rng as _;
use rayon::prelude::*;

use super::config::{DeepConfig, RunConfig};
use super::metrics::{auc_from_scores, CsvWriter};
use crate::deep::env::{eval_starts, evaluate_policy, mean, noisy_reward, ACTION_BOUND, ACT_DIM, OBS_DIM};
use crate::deep::{Agent, AgentKind, ContinuousReplay, PointReachEnv, ReturnBaselines};
use crate::error::{Error, Result};
use crate::rng::{seeded_stream, stream};

/// Episodes behind the scripted and idle reference returns.
pub const BASELINE_EPISODES: usize = 1000;

/// Reference returns over a fixed set of start positions, shared by every
/// run.
pub fn oracle_baselines() -> Result<ReturnBaselines> {
    let starts = eval_starts(BASELINE_EPISODES, &mut seeded_stream(0, stream::ORACLE));
    ReturnBaselines::compute(&starts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepSummary {
    pub seed: u64,
    /// Mean normalized evaluation score over all evaluations.
    pub auc: f64,
    pub best_score: f64,
    pub best_return: f64,
    /// First evaluation step with a normalized score of at least 0.9.
    pub reached_090: Option<u64>,
    pub final_return: f64,
    pub final_score: f64,
    pub evaluations: Vec<(u64, f64, f64)>,
}

pub fn run_deep(cfg: &RunConfig) -> Result<Vec<DeepSummary>> {
    let deep = cfg.deep.as_ref().ok_or_else(|| Error::Config("deep run needs agent keys".into()))?;
    deep.effective_td3().validate()?;
    let baselines = oracle_baselines()?;
    cfg.seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, deep, &baselines, seed))
        .collect()
}

fn td_names(kind: AgentKind, n: usize, k: usize) -> Vec<String> {
    match kind {
        AgentKind::Td3 => vec!["td_err_q".into()],
        AgentKind::CompositeTd3 => (1..=n)
            .map(|i| format!("td_err_trunc_{i}"))
            .chain((1..=n).map(|i| format!("td_err_shift_{i}")))
            .chain(["td_err_q".to_string()])
            .collect(),
        AgentKind::Td3Delta => (1..=k).map(|i| format!("td_err_gamma_{i}")).collect(),
    }
}

fn run_seed(cfg: &RunConfig, deep: &DeepConfig, baselines: &ReturnBaselines, seed: u64) -> Result<DeepSummary> {
    let td3 = deep.effective_td3();
    let mut init = seeded_stream(seed, stream::INIT);
    let mut train = seeded_stream(seed, stream::TRAIN);
    let mut env_rng = seeded_stream(seed, stream::ENV);
    let starts = eval_starts(deep.eval_episodes, &mut seeded_stream(seed, stream::EVAL));

    let mut agent = Agent::new(deep.agent, td3.clone(), OBS_DIM, ACT_DIM, ACTION_BOUND, &mut init)?;
    let mut replay = ContinuousReplay::new(OBS_DIM, ACT_DIM, deep.buffer_capacity)?;
    let mut env = PointReachEnv::new();
    let mut obs = env.reset(&mut env_rng);
    let mut out = CsvWriter::create(&cfg.output_dir, &cfg.run_id, seed)?;
    let names = td_names(deep.agent, td3.n, td3.k);

    let mut td_sum = vec![0.0; names.len()];
    let mut loss_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut updates = 0u64;
    let mut evaluations = Vec::new();

    for t in 1..=deep.env_steps {
        let action: Vec<f64> = if t <= deep.warmup_steps {
            (0..ACT_DIM).map(|_| train.random_range(-ACTION_BOUND..=ACTION_BOUND)).collect()
        } else {
            agent.explore(&obs, &mut train)?
        };
        let step = env.step(&action);
        let reward = if deep.reward_noise > 0.0 {
            noisy_reward(step.reward, deep.reward_noise, &mut env_rng)
        } else {
            step.reward
        };
        // The episode end is a time limit, so the stored transition bootstraps.
        replay.push(&obs, &action, reward, &step.obs, false);
        obs = if step.done { env.reset(&mut env_rng) } else { step.obs };

        if t > deep.warmup_steps && replay.len() >= deep.batch_size {
            for _ in 0..deep.steps_per_sample {
                let batch = replay.sample(deep.batch_size, &mut train)?;
                let stats = agent.train_step(&batch, &mut train)?;
                for (s, v) in td_sum.iter_mut().zip(&stats.mean_abs_td) {
                    *s += v;
                }
                loss_sum += stats.loss;
                entropy_sum += stats.entropy;
                updates += 1;
            }
        }

        if t % deep.eval_every == 0 || t == deep.env_steps {
            let returns = evaluate_policy(&starts, |o| agent.act(o))?;
            let ret = mean(&returns);
            let score = baselines.score(ret);
            evaluations.push((t, ret, score));
            let mut log = |metric: &str, v: f64| -> Result<()> {
                if cfg.logs(metric) {
                    out.row(t, metric, v)?;
                }
                Ok(())
            };
            log("eval_return", ret)?;
            log("eval_score", score)?;
            if updates > 0 {
                let u = updates as f64;
                log("critic_loss", loss_sum / u)?;
                if deep.agent == AgentKind::CompositeTd3 {
                    log("entropy", entropy_sum / u)?;
                }
                for (name, s) in names.iter().zip(&td_sum) {
                    log(name, s / u)?;
                }
            }
            log("clipped_actions", env.clipped_actions() as f64)?;
            out.flush()?;
            td_sum.iter_mut().for_each(|s| *s = 0.0);
            loss_sum = 0.0;
            entropy_sum = 0.0;
            updates = 0;
            if deep.save_params {
                save_params(cfg, seed, &agent)?;
            }
        }
    }

    let scores: Vec<f64> = evaluations.iter().map(|e| e.2).collect();
    let best = evaluations
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |b, e| if e.2 > b.1 { (e.1, e.2) } else { b });
    let last = evaluations.last().copied().unwrap_or((0, f64::NAN, f64::NAN));
    Ok(DeepSummary {
        seed,
        auc: auc_from_scores(&scores),
        best_score: best.1,
        best_return: best.0,
        reached_090: evaluations.iter().find(|e| e.2 >= 0.9).map(|e| e.0),
        final_return: last.1,
        final_score: last.2,
        evaluations,
    })
}

fn save_params(cfg: &RunConfig, seed: u64, agent: &Agent) -> Result<()> {
    let base = format!("{}_seed{seed}", cfg.run_id);
    std::fs::write(cfg.output_dir.join(format!("{base}_actor.params")), agent.actor.params.to_text())?;
    for (i, c) in agent.critics.iter().enumerate() {
        std::fs::write(cfg.output_dir.join(format!("{base}_critic{i}.params")), c.params.to_text())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::ParamVector;
    use crate::harness::metrics::{csv_path, read_csv};

    #[test]
    fn short_run_logs_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::parse(&format!(
            "experiment = deep\nrun_id = d\noutput_dir = {}\nagent.kind = composite_td3\n\
             deep.env_steps = 300\ndeep.warmup_steps = 100\ndeep.batch_size = 16\n\
             deep.eval_every = 100\ndeep.eval_episodes = 3\ndeep.critic_hidden = 8\n\
             deep.actor_hidden = 8\nnoise.reward_p = 0.4",
            dir.path().display()
        ))
        .unwrap();
        let res = run_deep(&cfg).unwrap();
        assert_eq!(res[0].evaluations.len(), 3);
        let rows = read_csv(&csv_path(dir.path(), "d", 0)).unwrap();
        assert!(rows.iter().any(|r| r.metric == "td_err_shift_4" && r.step == 300));
        let text = std::fs::read_to_string(dir.path().join("d_seed0_critic1.params")).unwrap();
        assert!(ParamVector::from_text(&text).is_ok());
    }

    #[test]
    fn baselines_are_sane() {
        let b = oracle_baselines().unwrap();
        assert!(b.oracle > b.zero && b.oracle < 0.0);
    }
}
