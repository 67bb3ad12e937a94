//! Configured experiments: oracle export, tabular runs, deep runs, grid
//! sweeps and speedup reports. Every run writes long-format CSV.

pub mod config;
pub mod deep;
pub mod export;
pub mod metrics;
pub mod report;
pub mod sweep;
pub mod tabular;

use std::fmt::Write as _;

pub use config::{Experiment, RunConfig};
pub use deep::{run_deep, DeepSummary};
pub use export::{run_oracle, OracleSummary};
pub use metrics::{convergence_step, CsvWriter, MetricRow};
pub use report::{format_report, report_speedup, ReportRow};
pub use sweep::{run_sweep, CellSummary};
pub use tabular::{run_tabular, TabularSummary};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Oracle(OracleSummary),
    Tabular(Vec<TabularSummary>),
    Deep(Vec<DeepSummary>),
    Sweep(Vec<CellSummary>),
    Report(Vec<ReportRow>),
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    Ok(match cfg.experiment {
        Experiment::Oracle => Outcome::Oracle(run_oracle(cfg)?),
        Experiment::Tabular => Outcome::Tabular(run_tabular(cfg)?),
        Experiment::Deep => Outcome::Deep(run_deep(cfg)?),
        Experiment::Sweep => Outcome::Sweep(run_sweep(cfg)?),
        Experiment::Report => Outcome::Report(report_speedup(cfg)?),
    })
}

fn opt_step(v: Option<u64>) -> String {
    v.map_or_else(|| "n/c".into(), |s| s.to_string())
}

impl Outcome {
    /// Human-readable summary table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        match self {
            Outcome::Oracle(o) => {
                let _ = writeln!(s, "Q*(s0, .) = {:?}", o.q_s0);
                let _ = writeln!(s, "greedy policy = {:?}", o.policy);
                let _ = writeln!(s, "max |trunc + shift - Q*| = {:e}", o.identity_error);
                let _ = writeln!(s, "wrote {}", o.path.display());
            }
            Outcome::Tabular(rows) => {
                let _ = writeln!(s, "{:>6} {:>12} {:>14} {:>10} {:>8}", "seed", "converged", "Q(s0,a)", "rel_err", "auc");
                for r in rows {
                    let _ = writeln!(
                        s,
                        "{:>6} {:>12} {:>14.6} {:>10.4} {:>8.4}",
                        r.seed,
                        opt_step(r.convergence_step),
                        r.final_q_s0_a,
                        r.final_rel_err,
                        r.auc
                    );
                }
            }
            Outcome::Deep(rows) => {
                let _ = writeln!(s, "{:>6} {:>8} {:>12} {:>10} {:>12}", "seed", "auc", "best_return", "best_score", "reached_0.9");
                for r in rows {
                    let _ = writeln!(
                        s,
                        "{:>6} {:>8.4} {:>12.3} {:>10.4} {:>12}",
                        r.seed,
                        r.auc,
                        r.best_return,
                        r.best_score,
                        opt_step(r.reached_090)
                    );
                }
            }
            Outcome::Sweep(cells) => {
                for c in cells {
                    let _ = writeln!(s, "{:<40} mean auc {:.4}", c.cell, c.mean_auc);
                }
            }
            Outcome::Report(rows) => s.push_str(&format_report(rows)),
        }
        s
    }

    /// Non-fatal problems worth printing to stderr.
    pub fn warnings(&self) -> Vec<String> {
        match self {
            Outcome::Report(rows) => rows
                .iter()
                .filter(|r| r.has_unconverged())
                .map(|r| format!("warning: `{}` has runs that never converged (n/c)", r.label))
                .collect(),
            _ => Vec::new(),
        }
    }
}
