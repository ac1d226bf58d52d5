//! Median selection against the sorting-network baseline.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use tokendrop_core::bitonic::bitonic_median;
use tokendrop_core::omsel::{omsel, OmselConfig};
use tokendrop_core::oracle::sort_median_i64;
use tokendrop_core::synth::{mcn_shaped_scores, rng_for, AttentionShape};
use tokendrop_core::trace::verify_full_coverage;
use tokendrop_core::{CostTable, McnParams, NetProfile, OpTally, RingParams, Session};

use crate::config::{RunConfig, ScoreInput};
use crate::error::{CliError, CliResult};
use crate::report::{ensure_dir, write_csv, write_json};

const SCORE_STREAM: u64 = 0x7363_6f72;

/// Seeded score vector for trial `trial` at length `n`.
pub fn trial_scores(seed: u64, input: ScoreInput, mcn: &McnParams, n: usize, trial: u32) -> CliResult<Vec<f64>> {
    let mut rng = rng_for(seed, SCORE_STREAM + n as u64, u64::from(trial));
    Ok(match input {
        ScoreInput::Mcn => mcn_shaped_scores(&mut rng, n, AttentionShape::default(), mcn)?,
        ScoreInput::Uniform => (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: u32,
    pub omsel: OpTally,
    pub omsel_rounds: u32,
    pub fell_back: bool,
    pub omsel_correct: bool,
    pub bitonic: OpTally,
    pub bitonic_correct: bool,
    /// Coverage verdict when tracing was requested.
    pub trace_ok: Option<bool>,
}

/// One seeded trial of both methods on the same scores.
pub fn run_trial(
    cfg: &RunConfig,
    ring: RingParams,
    costs: &CostTable,
    omsel_cfg: &OmselConfig,
    n: usize,
    trial: u32,
) -> CliResult<TrialRecord> {
    let scores = trial_scores(cfg.seed, cfg.input, &cfg.mcn, n, trial)?;
    let encoded = scores.iter().map(|&x| ring.encode(x).map(|e| ring.to_signed(e))).collect::<Result<Vec<_>, _>>()?;
    let expected = sort_median_i64(&encoded)?;
    let session_seed = rng_for(cfg.seed, 0x7365_7373 + n as u64, u64::from(trial)).gen::<u64>();

    let mut s = Session::with_costs(ring, costs.clone(), session_seed);
    if cfg.trace {
        s.enable_trace();
    }
    let shared = s.share_reals(&scores)?;
    let out = omsel(&mut s, &shared, omsel_cfg)?;
    let omsel_correct = s.peek_signed(&out.median) == expected;
    let omsel = *s.ledger().total();
    let trace_ok = if cfg.trace { s.take_trace().map(|t| verify_full_coverage(&t, n).is_ok()) } else { None };

    let mut b = Session::with_costs(ring, costs.clone(), session_seed ^ 1);
    let shared = b.share_reals(&scores)?;
    let med = bitonic_median(&mut b, &shared)?;
    Ok(TrialRecord {
        n,
        trial,
        omsel,
        omsel_rounds: out.rounds,
        fell_back: out.fell_back,
        omsel_correct,
        bitonic: *b.ledger().total(),
        bitonic_correct: b.peek_signed(&med) == expected,
        trace_ok,
    })
}

/// Aggregate row of one method at one length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub trials: u32,
    pub mean_cmp: f64,
    pub min_cmp: u64,
    pub max_cmp: u64,
    pub mean_mux: f64,
    pub min_mux: u64,
    pub max_mux: u64,
    /// Selection rounds; zero for the sorting network.
    pub mean_rounds: f64,
    pub max_rounds: u32,
    pub mean_comm_rounds: f64,
    pub fallbacks: u32,
    pub correct: u32,
    /// `(profile, mean modeled seconds)`.
    pub time_s: Vec<(String, f64)>,
    /// Bitonic `cmp + mux` over this method's mean `cmp + mux`.
    pub op_ratio_vs_bitonic: f64,
    pub trace_failures: Option<u32>,
}

fn mean<I: Iterator<Item = f64>>(it: I) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c.max(1) as f64
}

fn summarize(method: &str, records: &[TrialRecord], profiles: &[NetProfile], bitonic_ops: f64) -> BenchRow {
    let is_omsel = method == "omsel";
    let tally = |r: &TrialRecord| if is_omsel { r.omsel } else { r.bitonic };
    let cmps: Vec<u64> = records.iter().map(|r| tally(r).cmp).collect();
    let muxes: Vec<u64> = records.iter().map(|r| tally(r).mux).collect();
    let mean_cmp = mean(cmps.iter().map(|&x| x as f64));
    let mean_mux = mean(muxes.iter().map(|&x| x as f64));
    let rounds: Vec<u32> = records.iter().map(|r| if is_omsel { r.omsel_rounds } else { 0 }).collect();
    BenchRow {
        method: method.to_string(),
        n: records[0].n,
        trials: records.len() as u32,
        mean_cmp,
        min_cmp: cmps.iter().copied().min().unwrap_or(0),
        max_cmp: cmps.iter().copied().max().unwrap_or(0),
        mean_mux,
        min_mux: muxes.iter().copied().min().unwrap_or(0),
        max_mux: muxes.iter().copied().max().unwrap_or(0),
        mean_rounds: mean(rounds.iter().map(|&r| f64::from(r))),
        max_rounds: rounds.iter().copied().max().unwrap_or(0),
        mean_comm_rounds: mean(records.iter().map(|r| tally(r).rounds as f64)),
        fallbacks: records.iter().filter(|r| is_omsel && r.fell_back).count() as u32,
        correct: records.iter().filter(|r| if is_omsel { r.omsel_correct } else { r.bitonic_correct }).count() as u32,
        time_s: profiles.iter().map(|p| (p.name.clone(), mean(records.iter().map(|r| tally(r).time(p))))).collect(),
        op_ratio_vs_bitonic: bitonic_ops / (mean_cmp + mean_mux),
        trace_failures: is_omsel
            .then(|| records.iter().filter(|r| r.trace_ok == Some(false)).count() as u32)
            .filter(|_| records.iter().any(|r| r.trace_ok.is_some())),
    }
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

/// All trials for every configured length, in `(n, trial)` order.
pub fn run_trials(cfg: &RunConfig) -> CliResult<Vec<Vec<TrialRecord>>> {
    let ring = cfg.ring()?;
    let costs = cfg.cost_model()?.costs;
    let pool = pool(cfg.workers)?;
    cfg.n
        .iter()
        .map(|&n| {
            pool.install(|| {
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| run_trial(cfg, ring, &costs, &cfg.omsel, n, t))
                    .collect::<CliResult<Vec<_>>>()
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

pub fn summarize_all(cfg: &RunConfig, trials: &[Vec<TrialRecord>]) -> CliResult<BenchSummary> {
    let profiles = cfg.profiles()?;
    let mut rows = Vec::new();
    for records in trials {
        let b = mean(records.iter().map(|r| (r.bitonic.cmp + r.bitonic.mux) as f64));
        rows.push(summarize("bitonic", records, &profiles, b));
        rows.push(summarize("omsel", records, &profiles, b));
    }
    Ok(BenchSummary { seed: cfg.seed, rows })
}

pub const CSV_NAME: &str = "omsel_bench.csv";
pub const JSON_NAME: &str = "omsel_bench.json";

pub fn execute(cfg: &RunConfig) -> CliResult<BenchSummary> {
    let trials = run_trials(cfg)?;
    let summary = summarize_all(cfg, &trials)?;
    let profiles = cfg.profiles()?;
    let mut header: Vec<String> = [
        "method",
        "n",
        "trials",
        "mean_cmp",
        "min_cmp",
        "max_cmp",
        "mean_mux",
        "min_mux",
        "max_mux",
        "mean_rounds",
        "max_rounds",
        "mean_comm_rounds",
        "fallbacks",
        "correct",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(profiles.iter().map(|p| format!("time_{}_s", p.name)));
    header.push("op_ratio_vs_bitonic".into());
    if cfg.trace {
        header.push("trace_failures".into());
    }
    let rows: Vec<Vec<String>> = summary
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.method.clone(),
                r.n.to_string(),
                r.trials.to_string(),
                r.mean_cmp.to_string(),
                r.min_cmp.to_string(),
                r.max_cmp.to_string(),
                r.mean_mux.to_string(),
                r.min_mux.to_string(),
                r.max_mux.to_string(),
                r.mean_rounds.to_string(),
                r.max_rounds.to_string(),
                r.mean_comm_rounds.to_string(),
                r.fallbacks.to_string(),
                r.correct.to_string(),
            ];
            v.extend(r.time_s.iter().map(|(_, t)| t.to_string()));
            v.push(r.op_ratio_vs_bitonic.to_string());
            if cfg.trace {
                v.push(r.trace_failures.unwrap_or(0).to_string());
            }
            v
        })
        .collect();
    ensure_dir(&cfg.out)?;
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&cfg.out.join(CSV_NAME), &header_refs, &rows)?;
    write_json(&cfg.out.join(JSON_NAME), &summary)?;

    let wrong: Vec<String> = summary
        .rows
        .iter()
        .filter(|r| r.correct != r.trials || r.trace_failures.unwrap_or(0) > 0)
        .map(|r| format!("{} n={}", r.method, r.n))
        .collect();
    if !wrong.is_empty() {
        return Err(CliError::Check(format!("median mismatch or trace failure: {}", wrong.join("; "))));
    }
    Ok(summary)
}
