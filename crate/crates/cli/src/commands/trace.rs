//! Access-pattern trace of one median selection, with its verifier.

use serde::Serialize;
use tokendrop_core::omsel::{omsel, OmselOutcome};
use tokendrop_core::trace::{same_schedule, verify_full_coverage};
use tokendrop_core::{Session, Trace};

use crate::commands::omsel_bench::trial_scores;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{ensure_dir, write_json, write_text};

/// How many further inputs to try when looking for one with the same
/// revealed round count.
pub const PAIR_SEARCH: u32 = 256;

/// Runs selection on trial `trial`'s scores with tracing on.
pub fn traced_run(cfg: &RunConfig, n: usize, trial: u32) -> CliResult<(Trace, OmselOutcome)> {
    let scores = trial_scores(cfg.seed, cfg.input, &cfg.mcn, n, trial)?;
    let mut s = Session::with_costs(cfg.ring()?, cfg.cost_model()?.costs, cfg.seed ^ u64::from(trial));
    s.enable_trace();
    let shared = s.share_reals(&scores)?;
    let out = omsel(&mut s, &shared, &cfg.omsel)?;
    let trace = s.take_trace().unwrap_or_default();
    Ok((trace, out))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceCheck {
    pub n: usize,
    pub rounds: u32,
    pub events: usize,
    pub partition_cmp_events: usize,
    pub coverage_ok: bool,
    pub coverage_error: Option<String>,
    /// Trial index of a second input with the same round count.
    pub pair_trial: Option<u32>,
    pub pair_identical: Option<bool>,
}

impl TraceCheck {
    pub fn passed(&self) -> bool {
        self.coverage_ok && self.pair_identical != Some(false)
    }
}

/// Verifies coverage of the first trace and equality against the first
/// later input that reveals the same round count.
pub fn check(cfg: &RunConfig, n: usize) -> CliResult<(Trace, TraceCheck)> {
    let (trace, out) = traced_run(cfg, n, 0)?;
    let coverage = verify_full_coverage(&trace, n);
    let mut pair_trial = None;
    let mut pair_identical = None;
    if !out.fell_back {
        for t in 1..=PAIR_SEARCH {
            let (other, o) = traced_run(cfg, n, t)?;
            if o.rounds == out.rounds && !o.fell_back {
                pair_trial = Some(t);
                pair_identical = Some(same_schedule(&trace, &other));
                break;
            }
        }
    }
    let report = TraceCheck {
        n,
        rounds: out.rounds,
        events: trace.len(),
        partition_cmp_events: trace.count(tokendrop_core::TraceOp::Cmp, true),
        coverage_ok: coverage.is_ok(),
        coverage_error: coverage.err().map(|e| e.to_string()),
        pair_trial,
        pair_identical,
    };
    Ok((trace, report))
}

pub const TRACE_NAME: &str = "trace.jsonl";
pub const CHECK_NAME: &str = "trace_check.json";

pub fn execute(cfg: &RunConfig) -> CliResult<TraceCheck> {
    let n = cfg.n[0];
    let (trace, report) = check(cfg, n)?;
    ensure_dir(&cfg.out)?;
    write_text(&cfg.out.join(TRACE_NAME), &trace.to_json_lines())?;
    write_json(&cfg.out.join(CHECK_NAME), &report)?;
    if !report.passed() {
        return Err(CliError::Check(format!(
            "trace verification failed: {}",
            report.coverage_error.clone().unwrap_or_else(|| "traces differ at equal round count".into())
        )));
    }
    Ok(report)
}
