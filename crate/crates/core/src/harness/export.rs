use std::fmt::Write as _;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::oracle::{composite_reference, value_iteration_capped};
use crate::qtable::QTable;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub q_s0: Vec<f64>,
    pub policy: Vec<usize>,
    /// `max |truncated_i + shifted_i - Q*|` over all horizons.
    pub identity_error: f64,
    pub path: std::path::PathBuf,
}

/// Writes `<run_id>_oracle.csv` (`table,s,a,value`) with the optimal
/// action-values and the truncated and shifted tables of its greedy policy.
pub fn run_oracle(cfg: &RunConfig) -> Result<OracleSummary> {
    let env = cfg.env.as_ref().ok_or_else(|| Error::Config("oracle needs env keys".into()))?;
    let mdp = env.spec.build(env.gamma)?;
    value_iteration_capped(&mdp, cfg.oracle_tol, cfg.oracle_max_sweeps)?;
    let (q, policy, horizons) = composite_reference(&mdp, cfg.oracle_n, cfg.oracle_tol)?;
    let mut text = String::from("table,s,a,value\n");
    let mut dump = |name: &str, t: &QTable| {
        for s in 0..t.num_states() {
            for (a, v) in t.row(crate::mdp::StateId(s)).iter().enumerate() {
                let _ = writeln!(text, "{name},{s},{a},{v}");
            }
        }
    };
    dump("q_star", &q);
    for (i, t) in horizons.truncated.iter().enumerate() {
        dump(&format!("trunc_{}", i + 1), t);
    }
    for (i, t) in horizons.shifted.iter().enumerate() {
        dump(&format!("shift_{}", i + 1), t);
    }
    let identity_error = horizons
        .truncated
        .iter()
        .zip(&horizons.shifted)
        .map(|(tr, sh)| tr.add(sh).sup_distance(&q))
        .fold(0.0, f64::max);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("{}_oracle.csv", cfg.run_id));
    std::fs::write(&path, text)?;
    Ok(OracleSummary {
        q_s0: q.row(mdp.initial_state()).to_vec(),
        policy: policy.iter().map(|a| a.0).collect(),
        identity_error,
        path,
    })
}
