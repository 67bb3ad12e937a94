use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::config::RunConfig;
use super::metrics::{convergence_step, CsvWriter, mean_speedup, paired_speedups, read_run, series};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub candidate: BTreeMap<u64, Option<u64>>,
    pub baseline: BTreeMap<u64, Option<u64>>,
    pub speedups: Vec<(u64, Option<f64>)>,
    pub mean: Option<f64>,
}

impl ReportRow {
    pub fn has_unconverged(&self) -> bool {
        self.speedups.iter().any(|s| s.1.is_none())
    }
}

/// Convergence step of every seed of a logged run.
pub fn convergence_steps(cfg: &RunConfig, run_id: &str) -> Result<BTreeMap<u64, Option<u64>>> {
    Ok(read_run(&cfg.output_dir, run_id)?
        .into_iter()
        .map(|(seed, rows)| (seed, convergence_step(&series(&rows, "greedy_optimal"))))
        .collect())
}

/// Speedup of each candidate run over its paired baseline run. Also
/// writes `<run_id>_report.csv`: one `speedup` row per converged seed pair
/// (step = candidate convergence step) and a `mean_speedup` row per label
/// when every pair converged.
pub fn report_speedup(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let rows = speedup_rows(cfg)?;
    let path = cfg.output_dir.join(format!("{}_report.csv", cfg.run_id));
    let mut out = CsvWriter::create_at(&path, &cfg.run_id, 0)?;
    for r in &rows {
        for (seed, v) in &r.speedups {
            if let (Some(v), Some(Some(step))) = (v, r.candidate.get(seed)) {
                out.row_for(&r.label, *seed, *step, "speedup", *v)?;
            }
        }
        if let Some(m) = r.mean {
            out.row_for(&r.label, 0, 0, "mean_speedup", m)?;
        }
    }
    out.flush()?;
    Ok(rows)
}

fn speedup_rows(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let rep = cfg.report.as_ref().ok_or_else(|| Error::Config("report needs report.candidate".into()))?;
    rep.candidate
        .iter()
        .zip(&rep.baseline)
        .zip(&rep.labels)
        .map(|((c, b), label)| {
            let candidate = convergence_steps(cfg, c)?;
            let baseline = convergence_steps(cfg, b)?;
            let speedups = paired_speedups(&candidate, &baseline);
            Ok(ReportRow {
                label: label.clone(),
                mean: mean_speedup(&speedups),
                candidate,
                baseline,
                speedups,
            })
        })
        .collect()
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/c".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>9}  per-seed", "run", "speedup");
    for r in rows {
        let seeds: Vec<String> = r.speedups.iter().map(|(seed, v)| format!("{seed}:{}", fmt_pct(*v))).collect();
        let _ = writeln!(s, "{:<16} {:>9}  {}", r.label, fmt_pct(r.mean), seeds.join(" "));
    }
    s
}
