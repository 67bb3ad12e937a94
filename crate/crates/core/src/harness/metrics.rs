//! Long-format metric CSV and the scores computed from it.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "run_id,seed,step,metric,value";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: u64,
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

pub fn csv_path(dir: &Path, run_id: &str, seed: u64) -> PathBuf {
    dir.join(format!("{run_id}_seed{seed}.csv"))
}

/// Append-only writer for one `(run_id, seed)` file.
#[derive(Debug)]
pub struct CsvWriter {
    out: BufWriter<File>,
    run_id: String,
    seed: u64,
    last_step: u64,
}

impl CsvWriter {
    pub fn create(dir: &Path, run_id: &str, seed: u64) -> Result<Self> {
        Self::create_at(&csv_path(dir, run_id, seed), run_id, seed)
    }

    pub fn create_at(path: &Path, run_id: &str, seed: u64) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CSV_HEADER.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(Self {
            out,
            run_id: run_id.to_string(),
            seed,
            last_step: 0,
        })
    }

    pub fn row(&mut self, step: u64, metric: &str, value: f64) -> Result<()> {
        debug_assert!(step >= self.last_step, "steps must not decrease");
        self.last_step = step;
        writeln!(self.out, "{},{},{},{},{}", self.run_id, self.seed, step, metric, value)?;
        Ok(())
    }

    /// Row with its own run id and seed, for summary files.
    pub fn row_for(&mut self, run_id: &str, seed: u64, step: u64, metric: &str, value: f64) -> Result<()> {
        writeln!(self.out, "{run_id},{seed},{step},{metric},{value}")?;
        Ok(())
    }

    /// Pushes buffered rows to disk so a killed run leaves a readable prefix.
    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl Drop for CsvWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let bad = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            Ok(MetricRow {
                run_id: f[0].to_string(),
                seed: f[1].parse().map_err(|_| bad("bad seed"))?,
                step: f[2].parse().map_err(|_| bad("bad step"))?,
                metric: f[3].to_string(),
                value: f[4].parse().map_err(|_| bad("bad value"))?,
            })
        })
        .collect()
}

/// All `<run_id>_seed<N>.csv` files in `dir`, keyed by seed.
pub fn read_run(dir: &Path, run_id: &str) -> Result<BTreeMap<u64, Vec<MetricRow>>> {
    let prefix = format!("{run_id}_seed");
    let mut runs = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(seed) = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".csv")) else {
            continue;
        };
        let Ok(seed) = seed.parse::<u64>() else { continue };
        runs.insert(seed, read_csv(&dir.join(name))?);
    }
    if runs.is_empty() {
        return Err(Error::Config(format!("no CSV files for run `{run_id}` in {}", dir.display())));
    }
    Ok(runs)
}

/// `(step, value)` pairs of one metric, in file order.
pub fn series(rows: &[MetricRow], metric: &str) -> Vec<(u64, f64)> {
    rows.iter().filter(|r| r.metric == metric).map(|r| (r.step, r.value)).collect()
}

/// First checkpoint from which the indicator stays at 1 until the end.
pub fn convergence_step(indicator: &[(u64, f64)]) -> Option<u64> {
    let mut since = None;
    for &(step, v) in indicator {
        if v == 1.0 {
            since.get_or_insert(step);
        } else {
            since = None;
        }
    }
    since
}

/// Mean of `1 - min(1, relative error)` over checkpoints; 1 is perfect
/// from the first checkpoint.
pub fn auc_from_errors(rel_errors: &[f64]) -> f64 {
    if rel_errors.is_empty() {
        return 0.0;
    }
    rel_errors.iter().map(|e| 1.0 - e.min(1.0)).sum::<f64>() / rel_errors.len() as f64
}

/// Mean of a normalized score series.
pub fn auc_from_scores(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Fractional reduction of convergence steps, `1 - candidate / baseline`.
pub fn speedup(candidate: u64, baseline: u64) -> f64 {
    1.0 - candidate as f64 / baseline as f64
}

/// Per-seed speedups for seeds present in both runs; `None` where either
/// run never converged.
pub fn paired_speedups(candidate: &BTreeMap<u64, Option<u64>>, baseline: &BTreeMap<u64, Option<u64>>) -> Vec<(u64, Option<f64>)> {
    candidate
        .iter()
        .filter_map(|(seed, c)| {
            let b = baseline.get(seed)?;
            Some((*seed, c.zip(*b).map(|(c, b)| speedup(c, b))))
        })
        .collect()
}

/// Mean over seeds of per-seed speedups; `None` if any seed is missing.
pub fn mean_speedup(pairs: &[(u64, Option<f64>)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let all: Option<Vec<f64>> = pairs.iter().map(|(_, s)| *s).collect();
    all.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Welch's two-sample t statistic and its Welch-Satterthwaite degrees of
/// freedom. Needs at least two samples per side.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Precondition("welch_t needs two samples per group".into()));
    }
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (m, v / n)
    };
    let (ma, sa) = stats(a);
    let (mb, sb) = stats(b);
    let se2 = sa + sb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok((t, df))
}
