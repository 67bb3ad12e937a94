use super::config::{Experiment, RawConfig, RunConfig};
use super::deep::run_deep;
use super::metrics::CsvWriter;
use super::tabular::run_tabular;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: String,
    pub settings: Vec<(String, String)>,
    pub aucs: Vec<(u64, f64)>,
    pub mean_auc: f64,
}

/// Grid axes as `(sweep key, short tag, tabular key, deep key)`.
const AXES: [(&str, &str, Option<&str>, &str); 6] = [
    ("sweep.n", "n", Some("learner.n"), "td3.n"),
    ("sweep.alpha_tr", "atr", Some("learner.alpha_tr"), "td3.alpha_tr"),
    ("sweep.alpha_sh", "ash", Some("learner.alpha_sh"), "td3.alpha_sh"),
    ("sweep.beta_tr", "btr", None, "td3.beta_tr"),
    ("sweep.beta_sh", "bsh", None, "td3.beta_sh"),
    ("sweep.steps_per_sample", "sps", None, "deep.steps_per_sample"),
];

fn axis_values(cfg: &RunConfig, key: &str) -> Vec<String> {
    let g = &cfg.sweep;
    match key {
        "sweep.n" => g.n.iter().map(|v| v.to_string()).collect(),
        "sweep.alpha_tr" => g.alpha_tr.iter().map(|v| v.to_string()).collect(),
        "sweep.alpha_sh" => g.alpha_sh.iter().map(|v| v.to_string()).collect(),
        "sweep.beta_tr" => g.beta_tr.iter().map(|v| v.to_string()).collect(),
        "sweep.beta_sh" => g.beta_sh.iter().map(|v| v.to_string()).collect(),
        _ => g.steps_per_sample.iter().map(|v| v.to_string()).collect(),
    }
}

/// One validated configuration per grid cell, in row-major grid order.
pub fn sweep_cells(cfg: &RunConfig) -> Result<Vec<(String, Vec<(String, String)>, RunConfig)>> {
    let base = cfg.sweep.base.unwrap_or(Experiment::Tabular);
    let mut cells: Vec<(String, Vec<(String, String)>, RawConfig)> = vec![(cfg.run_id.clone(), Vec::new(), cfg.raw.clone())];
    for (sweep_key, tag, tabular_key, deep_key) in AXES {
        let values = axis_values(cfg, sweep_key);
        if values.is_empty() {
            continue;
        }
        let target = match base {
            Experiment::Deep => deep_key,
            _ => tabular_key.ok_or_else(|| Error::Config(format!("`{sweep_key}` needs sweep.base = deep")))?,
        };
        cells = cells
            .into_iter()
            .flat_map(|(id, settings, raw)| {
                values.iter().map(move |v| {
                    let mut raw = raw.clone();
                    raw.set(target, v.clone());
                    let mut settings = settings.clone();
                    settings.push((target.to_string(), v.clone()));
                    (format!("{id}_{tag}{v}"), settings, raw)
                })
            })
            .collect();
    }
    cells
        .into_iter()
        .map(|(id, settings, mut raw)| {
            raw.set("experiment", base.name());
            raw.set("run_id", id.clone());
            Ok((id, settings, RunConfig::from_raw(raw)?))
        })
        .collect()
}

/// Runs every cell and writes `<run_id>_summary.csv` with one `auc` row per
/// cell and seed.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<CellSummary>> {
    let cells = sweep_cells(cfg)?;
    let mut out = Vec::with_capacity(cells.len());
    let path = cfg.output_dir.join(format!("{}_summary.csv", cfg.run_id));
    let mut summary = CsvWriter::create_at(&path, &cfg.run_id, 0)?;
    for (cell, settings, cell_cfg) in cells {
        let (aucs, last_step): (Vec<(u64, f64)>, u64) = match cell_cfg.experiment {
            Experiment::Deep => {
                let steps = cell_cfg.deep.as_ref().map_or(0, |d| d.env_steps);
                (run_deep(&cell_cfg)?.into_iter().map(|s| (s.seed, s.auc)).collect(), steps)
            }
            _ => (
                run_tabular(&cell_cfg)?.into_iter().map(|s| (s.seed, s.auc)).collect(),
                cell_cfg.update_budget,
            ),
        };
        for &(seed, auc) in &aucs {
            summary.row_for(&cell, seed, last_step, "auc", auc)?;
        }
        let mean_auc = aucs.iter().map(|a| a.1).sum::<f64>() / aucs.len() as f64;
        summary.flush()?;
        out.push(CellSummary {
            cell,
            settings,
            aucs,
            mean_auc,
        });
    }
    Ok(out)
}
