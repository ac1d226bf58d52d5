//! Planted-signal retention task for comparing token scorers.
//!
//! Each instance has `m` tokens of which `signal` attend strongly to each
//! other and receive extra attention from every row. A few noise tokens act
//! as attention sinks: with outliers enabled, some rows put one very large
//! logit on a sink. Tokens are dropped by repeated halving, rescoring the
//! surviving sub-matrix each time, and we report how many signal tokens
//! survive and whether a fixed linear probe on the survivors still reads
//! the label.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcn::McnParams;
use crate::pipeline::plaintext::{half_keep, mcn_scores, ph1_scores, select_tokens, Matrix};
use crate::synth::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyTaskConfig {
    pub m: usize,
    pub signal: usize,
    pub heads: usize,
    /// Embedding width seen by the probe.
    pub d_embed: usize,
    /// Logit boost between signal tokens; every row also adds half of it
    /// to signal columns.
    pub boost: f64,
    pub sinks: usize,
    /// Fraction of rows per head carrying an outlier when outliers are on.
    pub outlier_rate: f64,
    pub outlier_low: f64,
    pub outlier_high: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        ToyTaskConfig {
            m: 64,
            signal: 8,
            heads: 4,
            d_embed: 32,
            boost: 1.0,
            sinks: 4,
            outlier_rate: 0.3,
            outlier_low: 8.0,
            outlier_high: 30.0,
            trials: 500,
            seed: 0,
        }
    }
}

impl ToyTaskConfig {
    pub fn validate(&self, depth: DropDepth) -> Result<()> {
        if self.m == 0 || self.heads == 0 || self.d_embed == 0 || self.trials == 0 {
            return Err(Error::Config("toy task sizes must be positive".into()));
        }
        if self.m >> depth.halvings() == 0 || self.m % (1 << depth.halvings()) != 0 {
            return Err(Error::Config(format!("m = {} cannot be halved {} times", self.m, depth.halvings())));
        }
        if self.signal + self.sinks > self.m {
            return Err(Error::Config("signal and sink tokens exceed m".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate)
            || self.outlier_low.is_nan()
            || self.outlier_high.is_nan()
            || self.outlier_low > self.outlier_high
        {
            return Err(Error::Config("invalid outlier settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropDepth {
    /// One halving, no outliers.
    Mild,
    /// Three halvings with outlier sinks.
    Deep,
}

impl DropDepth {
    pub const ALL: [DropDepth; 2] = [DropDepth::Mild, DropDepth::Deep];

    pub fn halvings(self) -> u32 {
        match self {
            DropDepth::Mild => 1,
            DropDepth::Deep => 3,
        }
    }

    pub fn outliers(self) -> bool {
        self == DropDepth::Deep
    }

    pub fn name(self) -> &'static str {
        match self {
            DropDepth::Mild => "mild",
            DropDepth::Deep => "deep",
        }
    }
}

impl fmt::Display for DropDepth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DropDepth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mild" => Ok(DropDepth::Mild),
            "deep" => Ok(DropDepth::Deep),
            _ => Err(Error::Config(format!("unknown drop depth {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scorer {
    Mcn(McnParams),
    /// Column sums of `exp(x - rowmax)`.
    SoftmaxPh1,
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Mcn(_) => "mcn",
            Scorer::SoftmaxPh1 => "softmax_ph1",
        }
    }

    pub fn score(&self, logits: &[Matrix]) -> Result<Vec<f64>> {
        match self {
            Scorer::Mcn(p) => mcn_scores(logits, p),
            Scorer::SoftmaxPh1 => Ok(ph1_scores(logits)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyInstance {
    /// `logits[h][i][j]`.
    pub logits: Vec<Matrix>,
    /// Signal token indices, ascending.
    pub signal: Vec<usize>,
    /// `+1` or `-1`.
    pub label: f64,
    pub embeddings: Matrix,
    /// Probe direction, unit length.
    pub probe: Vec<f64>,
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws one instance. Signal and sink positions are a random permutation
/// prefix so positions carry no information.
pub fn generate(cfg: &ToyTaskConfig, outliers: bool, rng: &mut ChaCha20Rng) -> ToyInstance {
    let m = cfg.m;
    let mut order: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut is_signal = vec![false; m];
    let mut signal: Vec<usize> = order[..cfg.signal].to_vec();
    signal.sort_unstable();
    for &i in &signal {
        is_signal[i] = true;
    }
    let sinks = &order[cfg.signal..cfg.signal + cfg.sinks];

    let logits = (0..cfg.heads)
        .map(|_| {
            (0..m)
                .map(|i| {
                    let mut row: Vec<f64> = (0..m)
                        .map(|j| {
                            let mut x = normal(rng);
                            if is_signal[j] {
                                x += 0.5 * cfg.boost;
                                if is_signal[i] {
                                    x += cfg.boost;
                                }
                            }
                            x
                        })
                        .collect();
                    if outliers && !sinks.is_empty() && rng.gen_bool(cfg.outlier_rate) {
                        let s = sinks[rng.gen_range(0..sinks.len())];
                        row[s] = rng.gen_range(cfg.outlier_low..=cfg.outlier_high);
                    }
                    row
                })
                .collect()
        })
        .collect();

    let mut probe: Vec<f64> = (0..cfg.d_embed).map(|_| normal(rng)).collect();
    let norm = probe.iter().map(|x| x * x).sum::<f64>().sqrt();
    probe.iter_mut().for_each(|x| *x /= norm);
    let label = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let embeddings = (0..m)
        .map(|i| (0..cfg.d_embed).map(|k| normal(rng) + if is_signal[i] { label * probe[k] } else { 0.0 }).collect())
        .collect();
    ToyInstance { logits, signal, label, embeddings, probe }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Original indices of the surviving tokens.
    pub kept: Vec<usize>,
    /// Fraction of signal tokens surviving; `None` without signal.
    pub retention: Option<f64>,
    pub probe_correct: bool,
}

/// Halves the instance `halvings` times under `scorer`.
pub fn run_instance(inst: &ToyInstance, scorer: &Scorer, halvings: u32) -> Result<RunResult> {
    let mut logits = inst.logits.clone();
    let mut kept: Vec<usize> = (0..inst.embeddings.len()).collect();
    for _ in 0..halvings {
        let scores = scorer.score(&logits)?;
        let keep = half_keep(&scores);
        logits = select_tokens(&logits, &keep);
        kept = keep.iter().map(|&i| kept[i]).collect();
    }
    let retention = if inst.signal.is_empty() {
        None
    } else {
        let hit = inst.signal.iter().filter(|i| kept.binary_search(i).is_ok()).count();
        Some(hit as f64 / inst.signal.len() as f64)
    };
    let mut pooled = vec![0.0; inst.probe.len()];
    for &i in &kept {
        for (p, x) in pooled.iter_mut().zip(&inst.embeddings[i]) {
            *p += x;
        }
    }
    let proj: f64 = pooled.iter().zip(&inst.probe).map(|(p, u)| p * u).sum::<f64>() / kept.len().max(1) as f64;
    let predicted = if proj >= 0.0 { 1.0 } else { -1.0 };
    Ok(RunResult { kept, retention, probe_correct: predicted == inst.label })
}

/// Aggregate of one scorer at one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub scorer: String,
    pub depth: DropDepth,
    /// Token counts after each halving, starting with `m`.
    pub schedule: Vec<usize>,
    pub runs: usize,
    /// Mean signal retention; `None` without signal tokens.
    pub retention: Option<f64>,
    pub probe_accuracy: f64,
    /// Runs with every signal token kept.
    pub full_retention_runs: usize,
}

/// Per-run retention of both scorers on the same instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub depth: DropDepth,
    pub mcn: Vec<Option<f64>>,
    pub ph1: Vec<Option<f64>>,
}

impl PairedOutcome {
    /// Fraction of runs where MCN keeps at least as much signal as Ph-1.
    /// `None` without signal.
    pub fn mcn_at_least_ph1(&self) -> Option<f64> {
        let pairs: Vec<(f64, f64)> = self.mcn.iter().zip(&self.ph1).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
        if pairs.is_empty() {
            return None;
        }
        Some(pairs.iter().filter(|(a, b)| a >= b).count() as f64 / pairs.len() as f64)
    }
}

fn summarize(scorer: &Scorer, depth: DropDepth, m: usize, results: &[RunResult]) -> ToyReport {
    let rets: Vec<f64> = results.iter().filter_map(|r| r.retention).collect();
    let retention = (!rets.is_empty()).then(|| rets.iter().sum::<f64>() / rets.len() as f64);
    ToyReport {
        scorer: scorer.name().to_string(),
        depth,
        schedule: (0..=depth.halvings()).map(|k| m >> k).collect(),
        runs: results.len(),
        retention,
        probe_accuracy: results.iter().filter(|r| r.probe_correct).count() as f64 / results.len().max(1) as f64,
        full_retention_runs: results.iter().filter(|r| r.retention == Some(1.0)).count(),
    }
}

/// Runs both scorers on `cfg.trials` shared instances at `depth`.
pub fn run_toy_task(cfg: &ToyTaskConfig, depth: DropDepth, mcn: McnParams) -> Result<(Vec<ToyReport>, PairedOutcome)> {
    cfg.validate(depth)?;
    let scorers = [Scorer::Mcn(mcn), Scorer::SoftmaxPh1];
    let mut results: [Vec<RunResult>; 2] = [Vec::new(), Vec::new()];
    for t in 0..cfg.trials {
        let mut rng = rng_for(cfg.seed, 0x746f_7900 + depth as u64, t as u64);
        let inst = generate(cfg, depth.outliers(), &mut rng);
        for (s, out) in scorers.iter().zip(results.iter_mut()) {
            out.push(run_instance(&inst, s, depth.halvings())?);
        }
    }
    let reports = scorers.iter().zip(&results).map(|(s, r)| summarize(s, depth, cfg.m, r)).collect();
    let paired = PairedOutcome {
        depth,
        mcn: results[0].iter().map(|r| r.retention).collect(),
        ph1: results[1].iter().map(|r| r.retention).collect(),
    };
    Ok((reports, paired))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_signal_has_no_retention() {
        let cfg = ToyTaskConfig { signal: 0, trials: 20, ..Default::default() };
        let (reports, paired) = run_toy_task(&cfg, DropDepth::Mild, McnParams::default()).unwrap();
        assert!(reports.iter().all(|r| r.retention.is_none()));
        assert_eq!(paired.mcn_at_least_ph1(), None);
    }

    #[test]
    fn strong_signal_survives_mild_drop() {
        let cfg = ToyTaskConfig { boost: 4.0, trials: 50, ..Default::default() };
        let (reports, _) = run_toy_task(&cfg, DropDepth::Mild, McnParams::default()).unwrap();
        for r in &reports {
            assert_eq!(r.retention, Some(1.0), "{}", r.scorer);
            assert_eq!(r.schedule, vec![64, 32]);
        }
    }

    #[test]
    fn kept_counts_follow_schedule() {
        let cfg = ToyTaskConfig::default();
        let mut rng = rng_for(3, 0, 0);
        let inst = generate(&cfg, true, &mut rng);
        assert_eq!(inst.signal.len(), 8);
        let r = run_instance(&inst, &Scorer::SoftmaxPh1, 3).unwrap();
        assert_eq!(r.kept.len(), 8);
        assert!(r.kept.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn invalid_configs() {
        let cfg = ToyTaskConfig { m: 12, ..Default::default() };
        assert!(cfg.validate(DropDepth::Deep).is_err());
        assert!(cfg.validate(DropDepth::Mild).is_ok());
        let cfg = ToyTaskConfig { signal: 62, ..Default::default() };
        assert!(cfg.validate(DropDepth::Mild).is_err());
    }
}
