//! Per-layer, per-stage modeled cost of the three drop placements.

use serde::Serialize;
use tokendrop_core::pipeline::cost_model::measure_plan_machinery;
use tokendrop_core::pipeline::{model_scheme_cost, Scheme, SchemeReport, StageCostModel};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::report::{ensure_dir, join_usize, write_csv, write_json};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub scheme: String,
    pub profile: String,
    pub m0: usize,
    pub schedule: String,
    pub total_s: f64,
    /// Baseline total over this scheme's total.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutput {
    pub model: StageCostModel,
    pub reports: Vec<SchemeReport>,
    pub speedups: Vec<SpeedupRow>,
}

/// Evaluates every configured `m0` and profile. The baseline is always
/// evaluated for the speedup column, but only selected schemes are
/// reported.
pub fn evaluate(cfg: &RunConfig) -> CliResult<PipelineOutput> {
    let model = cfg.cost_model()?;
    let profiles = cfg.profiles()?;
    let mut reports = Vec::new();
    let mut speedups = Vec::new();
    for &m0 in &cfg.m0 {
        let plan = cfg.plan(m0)?;
        let machinery = measure_plan_machinery(&model, &plan, cfg.network, &cfg.omsel, cfg.seed)?;
        for net in &profiles {
            let all: Vec<SchemeReport> = Scheme::ALL
                .iter()
                .map(|&s| model_scheme_cost(&plan, s, &model, net, &machinery))
                .collect::<Result<_, _>>()?;
            let baseline = all[0].total_s;
            for r in all.into_iter().filter(|r| cfg.schemes.contains(&r.scheme)) {
                speedups.push(SpeedupRow {
                    scheme: r.scheme.name().to_string(),
                    profile: net.name.clone(),
                    m0,
                    schedule: join_usize(&r.schedule),
                    total_s: r.total_s,
                    speedup: baseline / r.total_s,
                });
                reports.push(r);
            }
        }
    }
    Ok(PipelineOutput { model, reports, speedups })
}

pub const STAGES_CSV: &str = "pipeline_stages.csv";
pub const SUMMARY_CSV: &str = "pipeline_summary.csv";
pub const JSON_NAME: &str = "pipeline.json";

pub fn execute(cfg: &RunConfig) -> CliResult<PipelineOutput> {
    let out = evaluate(cfg)?;
    let mut stage_rows = Vec::new();
    for r in &out.reports {
        for l in &r.layers {
            for s in &l.stages {
                stage_rows.push(vec![
                    r.scheme.name().to_string(),
                    r.profile.clone(),
                    r.m0.to_string(),
                    l.layer.to_string(),
                    s.stage.clone(),
                    s.time_s.to_string(),
                    s.cmp.to_string(),
                    s.mux.to_string(),
                    s.bytes.to_string(),
                ]);
            }
        }
    }
    let summary_rows: Vec<Vec<String>> = out
        .speedups
        .iter()
        .map(|s| {
            vec![
                s.scheme.clone(),
                s.profile.clone(),
                s.m0.to_string(),
                s.schedule.clone(),
                s.total_s.to_string(),
                s.speedup.to_string(),
            ]
        })
        .collect();
    ensure_dir(&cfg.out)?;
    write_csv(
        &cfg.out.join(STAGES_CSV),
        &["scheme", "profile", "m0", "layer", "stage", "time_s", "cmp", "mux", "bytes"],
        &stage_rows,
    )?;
    write_csv(
        &cfg.out.join(SUMMARY_CSV),
        &["scheme", "profile", "m0", "schedule", "total_s", "speedup"],
        &summary_rows,
    )?;
    write_json(&cfg.out.join(JSON_NAME), &out)?;
    Ok(out)
}
