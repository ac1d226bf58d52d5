//! Signal retention of the two scorers on the planted-signal task.

use serde::Serialize;
use tokendrop_core::pipeline::{run_toy_task, DropDepth, ToyReport};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::report::{ensure_dir, join_usize, write_csv, write_json};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthSummary {
    pub depth: DropDepth,
    /// Fraction of runs where MCN kept at least as much signal as Ph-1.
    pub mcn_at_least_ph1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyOutput {
    pub reports: Vec<ToyReport>,
    pub paired: Vec<DepthSummary>,
}

pub fn evaluate(cfg: &RunConfig) -> CliResult<ToyOutput> {
    let toy = tokendrop_core::pipeline::ToyTaskConfig { seed: cfg.seed, ..cfg.toy };
    let mut reports = Vec::new();
    let mut paired = Vec::new();
    for depth in DropDepth::ALL {
        let (r, p) = run_toy_task(&toy, depth, cfg.mcn)?;
        reports.extend(r);
        paired.push(DepthSummary { depth, mcn_at_least_ph1: p.mcn_at_least_ph1() });
    }
    Ok(ToyOutput { reports, paired })
}

pub const CSV_NAME: &str = "toytask.csv";
pub const JSON_NAME: &str = "toytask.json";

fn or_na(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| x.to_string())
}

pub fn execute(cfg: &RunConfig) -> CliResult<ToyOutput> {
    let out = evaluate(cfg)?;
    let rows: Vec<Vec<String>> = out
        .reports
        .iter()
        .map(|r| {
            vec![
                r.scorer.clone(),
                r.depth.name().to_string(),
                join_usize(&r.schedule),
                or_na(r.retention),
                r.probe_accuracy.to_string(),
                r.runs.to_string(),
                r.full_retention_runs.to_string(),
            ]
        })
        .collect();
    ensure_dir(&cfg.out)?;
    write_csv(
        &cfg.out.join(CSV_NAME),
        &["scorer", "schedule_name", "schedule", "retention", "probe_accuracy", "runs", "full_retention_runs"],
        &rows,
    )?;
    write_json(&cfg.out.join(JSON_NAME), &out)?;
    Ok(out)
}
