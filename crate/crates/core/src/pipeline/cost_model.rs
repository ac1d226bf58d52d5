//! Analytic per-stage cost of secure inference, and its evaluation for the
//! three drop placements.
//!
//! Stage costs are calibrated at a reference token count: each stage gets a
//! share of a reference per-layer time on the reference link, a round count
//! and a traffic volume. The compute part is whatever remains of the share
//! once rounds and traffic are paid for on that link. Compute and traffic
//! then scale linearly or quadratically in the token count; rounds do not.
//!
//! The drop machinery itself is not modeled but measured: median selection
//! runs on synthetic shares, and the MCN and compaction charges are replayed
//! against the same cost table the protocol uses.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{parse_key_values, parse_value};
use crate::cost::{CostTable, NetProfile, OpKind};
use crate::drop::{compaction_cost, replay_cost, CompactionNetwork, DropPlan};
use crate::error::{Error, Result};
use crate::ledger::{CostLedger, OpTally, StageTag};
use crate::mcn::{mcn_cost, McnParams};
use crate::omsel::{omsel, OmselConfig};
use crate::ring::RingParams;
use crate::session::Session;
use crate::synth::{mcn_shaped_scores, rng_for, AttentionShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Qkv,
    QxK,
    Softmax,
    Xv,
    Ln2,
    LayerNorm,
    Ln3,
    Gelu,
    Ln4,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Qkv,
        Stage::QxK,
        Stage::Softmax,
        Stage::Xv,
        Stage::Ln2,
        Stage::LayerNorm,
        Stage::Ln3,
        Stage::Gelu,
        Stage::Ln4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Qkv => "QKV",
            Stage::QxK => "QxK",
            Stage::Softmax => "Softmax",
            Stage::Xv => "xV",
            Stage::Ln2 => "ln2",
            Stage::LayerNorm => "LayerNorm",
            Stage::Ln3 => "ln3",
            Stage::Gelu => "GELU",
            Stage::Ln4 => "ln4",
        }
    }

    fn key(self) -> String {
        self.name().to_ascii_lowercase()
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.key() == s.to_ascii_lowercase())
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Proportional to `m`.
    Linear,
    /// Proportional to `m^2`.
    Quadratic,
}

impl Scaling {
    fn factor(self, m: f64, reference: f64) -> f64 {
        match self {
            Scaling::Linear => m / reference,
            Scaling::Quadratic => (m / reference).powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCalibration {
    /// Fraction of the reference layer time spent in this stage.
    pub share: f64,
    pub rounds: f64,
    pub megabytes: f64,
    pub scaling: Scaling,
}

/// Modeled cost of one stage at some token count.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageCost {
    pub compute_s: f64,
    pub rounds: f64,
    pub bytes: f64,
}

impl StageCost {
    pub fn time(&self, net: &NetProfile) -> f64 {
        net.time(self.compute_s, self.rounds, self.bytes)
    }

    fn blend(a: StageCost, wa: f64, b: StageCost, wb: f64) -> StageCost {
        StageCost {
            compute_s: a.compute_s * wa + b.compute_s * wb,
            rounds: a.rounds * wa + b.rounds * wb,
            bytes: a.bytes * wa + b.bytes * wb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCostModel {
    pub reference_m: usize,
    /// Per-layer time at `reference_m` on `reference_net`.
    pub reference_seconds: f64,
    pub reference_net: NetProfile,
    pub stages: [StageCalibration; 9],
    /// Plaintext cost shares, for narrative comparison only.
    pub plaintext_shares: [f64; 9],
    /// Fraction of Softmax spent on the exponential phase.
    pub softmax_exp_fraction: f64,
    pub d_model: usize,
    pub heads: usize,
    pub mcn: McnParams,
    pub costs: CostTable,
}

impl Default for StageCostModel {
    fn default() -> Self {
        use Scaling::{Linear, Quadratic};
        let cal = |share, rounds, megabytes, scaling| StageCalibration { share, rounds, megabytes, scaling };
        StageCostModel {
            reference_m: 128,
            reference_seconds: 20.0,
            reference_net: NetProfile::lan(),
            stages: [
                cal(0.12, 2.0, 100.0, Linear),
                cal(0.10, 2.0, 250.0, Quadratic),
                cal(0.22, 60.0, 700.0, Quadratic),
                cal(0.08, 2.0, 200.0, Quadratic),
                cal(0.06, 2.0, 50.0, Linear),
                cal(0.06, 40.0, 120.0, Linear),
                cal(0.14, 2.0, 150.0, Linear),
                cal(0.08, 40.0, 450.0, Linear),
                cal(0.14, 2.0, 150.0, Linear),
            ],
            plaintext_shares: [0.12, 0.04, 0.03, 0.04, 0.08, 0.02, 0.32, 0.02, 0.33],
            softmax_exp_fraction: 0.8,
            d_model: 768,
            heads: 12,
            mcn: McnParams::default(),
            costs: CostTable::for_ring(&RingParams::default()),
        }
    }
}

impl StageCostModel {
    pub fn calibration(&self, stage: Stage) -> &StageCalibration {
        &self.stages[stage.index()]
    }

    fn reference_compute(&self, stage: Stage) -> f64 {
        let c = self.calibration(stage);
        let net = &self.reference_net;
        c.share * self.reference_seconds - c.rounds * net.latency - c.megabytes * 1e6 * 8.0 / net.bandwidth
    }

    /// Rejects calibrations whose traffic alone exceeds a stage's share.
    pub fn validate(&self) -> Result<()> {
        if self.reference_m == 0 || !(self.reference_seconds.is_finite() && self.reference_seconds > 0.0) {
            return Err(Error::Config("reference m and seconds must be positive".into()));
        }
        for st in Stage::ALL {
            let c = self.calibration(st);
            if !(c.share >= 0.0 && c.rounds >= 0.0 && c.megabytes >= 0.0) {
                return Err(Error::Config(format!("negative calibration for {}", st.name())));
            }
            if self.reference_compute(st) < 0.0 {
                return Err(Error::Config(format!(
                    "stage {}: rounds and traffic exceed its share of the reference time",
                    st.name()
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.softmax_exp_fraction) {
            return Err(Error::Config("softmax.exp_fraction must lie in [0, 1]".into()));
        }
        if self.heads == 0 || self.d_model == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Applies one calibration key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["reference", "m"] => self.reference_m = parse_value(key, value)?,
            ["reference", "seconds"] => self.reference_seconds = parse_value(key, value)?,
            ["reference", "profile"] => {
                self.reference_net =
                    NetProfile::by_name(value).ok_or_else(|| Error::Config(format!("unknown profile {value:?}")))?
            }
            ["softmax", "exp_fraction"] => self.softmax_exp_fraction = parse_value(key, value)?,
            ["model", "d_model"] => self.d_model = parse_value(key, value)?,
            ["model", "heads"] => self.heads = parse_value(key, value)?,
            ["mcn", "n_exp"] => self.mcn.n_exp = parse_value(key, value)?,
            ["mcn", "offset"] => self.mcn.offset = parse_value(key, value)?,
            ["plaintext", stage, "share"] => {
                let st = Stage::parse(stage).ok_or_else(|| Error::Config(format!("unknown stage in {key}")))?;
                self.plaintext_shares[st.index()] = parse_value(key, value)?;
            }
            ["stage", stage, field] => {
                let st = Stage::parse(stage).ok_or_else(|| Error::Config(format!("unknown stage in {key}")))?;
                let c = &mut self.stages[st.index()];
                match *field {
                    "share" => c.share = parse_value(key, value)?,
                    "rounds" => c.rounds = parse_value(key, value)?,
                    "megabytes" => c.megabytes = parse_value(key, value)?,
                    "scaling" => {
                        c.scaling = match value {
                            "linear" => Scaling::Linear,
                            "quadratic" => Scaling::Quadratic,
                            _ => return Err(Error::Config(format!("invalid scaling {value:?}"))),
                        }
                    }
                    _ => return Err(Error::Config(format!("unknown calibration key {key}"))),
                }
            }
            ["cost", rest @ ..] if !rest.is_empty() => self.costs.set(&rest.join("."), value)?,
            _ => return Err(Error::Config(format!("unknown calibration key {key}"))),
        }
        Ok(())
    }

    /// Default model overridden by a calibration file.
    pub fn from_calibration_text(text: &str) -> Result<StageCostModel> {
        let mut model = StageCostModel::default();
        for (k, v) in parse_key_values(text)? {
            model.set(&k, &v)?;
        }
        model.validate()?;
        Ok(model)
    }

    pub fn stage_cost(&self, stage: Stage, m: usize) -> StageCost {
        let c = self.calibration(stage);
        let f = c.scaling.factor(m as f64, self.reference_m as f64);
        StageCost { compute_s: self.reference_compute(stage) * f, rounds: c.rounds, bytes: c.megabytes * 1e6 * f }
    }

    pub fn stage_time(&self, stage: Stage, m: usize, net: &NetProfile) -> f64 {
        self.stage_cost(stage, m).time(net)
    }

    /// Modeled time of one full layer at `m` tokens.
    pub fn layer_time(&self, m: usize, net: &NetProfile) -> f64 {
        Stage::ALL.iter().map(|&s| self.stage_time(s, m, net)).sum()
    }

    /// Share of `stages` in the layer time at `m` tokens.
    pub fn share_of(&self, stages: &[Stage], m: usize, net: &NetProfile) -> f64 {
        let part: f64 = stages.iter().map(|&s| self.stage_time(s, m, net)).sum();
        part / self.layer_time(m, net)
    }

    /// `(exponential phase, normalization phase)` of the Softmax stage.
    pub fn softmax_phases(&self, m: usize, net: &NetProfile) -> (f64, f64) {
        let t = self.stage_time(Stage::Softmax, m, net);
        (t * self.softmax_exp_fraction, t * (1.0 - self.softmax_exp_fraction))
    }

    pub fn plaintext_share(&self, stage: Stage) -> f64 {
        self.plaintext_shares[stage.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Baseline,
    PostDrop,
    PreDrop,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Baseline, Scheme::PostDrop, Scheme::PreDrop];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::PostDrop => "post_drop",
            Scheme::PreDrop => "pre_drop",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Scheme::Baseline),
            "post" | "post_drop" => Ok(Scheme::PostDrop),
            "pre" | "pre_drop" => Ok(Scheme::PreDrop),
            _ => Err(Error::Config(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Measured charges of dropping half of `m` tokens at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropMachinery {
    pub m: usize,
    pub mcn: OpTally,
    pub omsel: OpTally,
    pub omsel_rounds: u32,
    /// Keep bits plus compaction of attention rows and columns, value input
    /// and residual.
    pub pre_overhead: OpTally,
    /// Keep bits plus compaction of the attention output and residual.
    pub post_overhead: OpTally,
}

/// Runs median selection on one synthetic MCN-shaped score vector of
/// length `m` and replays the remaining drop charges.
pub fn measure_drop_machinery(
    model: &StageCostModel,
    m: usize,
    network: CompactionNetwork,
    omsel_config: &OmselConfig,
    seed: u64,
) -> Result<DropMachinery> {
    let ring = RingParams::default();
    let mut rng = rng_for(seed, 0x6d65_6173, m as u64);
    let scores = mcn_shaped_scores(&mut rng, m, AttentionShape::default(), &model.mcn)?;
    let mut session = Session::with_costs(ring, model.costs.clone(), seed ^ m as u64);
    let shared = session.share_reals(&scores)?;
    let outcome = omsel(&mut session, &shared, omsel_config)?;
    let mut sel = session.ledger().stage_tally(StageTag::Omsel);
    sel.merge(&session.ledger().stage_tally(StageTag::Bitonic));

    let (h, d) = (model.heads, model.d_model);
    let mut keep = CostLedger::new(model.costs.clone());
    keep.charge_batch(OpKind::Cmp, m as u64);
    let keep = *keep.total();
    let mut pre = keep;
    pre.merge(&compaction_cost(&model.costs, m, h * m + 2 * d, network));
    pre.merge(&replay_cost(&model.costs, m, h * m / 2, network));
    let mut post = keep;
    post.merge(&compaction_cost(&model.costs, m, 2 * d, network));

    Ok(DropMachinery {
        m,
        mcn: mcn_cost(&model.costs, m, h, model.mcn.n_exp),
        omsel: sel,
        omsel_rounds: outcome.rounds,
        pre_overhead: pre,
        post_overhead: post,
    })
}

/// Drop machinery for every token count at which `plan` drops.
pub fn measure_plan_machinery(
    model: &StageCostModel,
    plan: &DropPlan,
    network: CompactionNetwork,
    omsel_config: &OmselConfig,
    seed: u64,
) -> Result<BTreeMap<usize, DropMachinery>> {
    let mut out = BTreeMap::new();
    for &layer in &plan.drop_layers {
        let m = plan.tokens_at(layer);
        if let std::collections::btree_map::Entry::Vacant(e) = out.entry(m) {
            e.insert(measure_drop_machinery(model, m, network, omsel_config, seed)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub time_s: f64,
    pub cmp: u64,
    pub mux: u64,
    pub bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    /// Tokens entering the layer.
    pub tokens: usize,
    pub stages: Vec<StageReport>,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub profile: String,
    pub m0: usize,
    pub schedule: Vec<usize>,
    pub layers: Vec<LayerReport>,
    pub total_s: f64,
    /// Charges of the drop machinery that was actually executed.
    pub ledger: OpTally,
}

impl SchemeReport {
    /// Time per stage name, summed over layers.
    pub fn stage_totals(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for l in &self.layers {
            for s in &l.stages {
                *out.entry(s.stage.clone()).or_insert(0.0) += s.time_s;
            }
        }
        out
    }
}

fn modeled(stage: Stage, cost: StageCost, net: &NetProfile) -> StageReport {
    StageReport { stage: stage.name().to_string(), time_s: cost.time(net), cmp: 0, mux: 0, bytes: cost.bytes }
}

fn measured(name: &str, t: &OpTally, net: &NetProfile) -> StageReport {
    StageReport { stage: name.to_string(), time_s: t.time(net), cmp: t.cmp, mux: t.mux, bytes: t.bytes as f64 }
}

/// Walks every layer of `plan` under `scheme`.
pub fn model_scheme_cost(
    plan: &DropPlan,
    scheme: Scheme,
    model: &StageCostModel,
    net: &NetProfile,
    machinery: &BTreeMap<usize, DropMachinery>,
) -> Result<SchemeReport> {
    let mut layers = Vec::with_capacity(plan.layers);
    let mut ledger = OpTally::default();
    let mut m = plan.m0;
    let mut schedule = vec![m];
    for layer in 1..=plan.layers {
        let tokens = m;
        let mut stages = Vec::new();
        if scheme == Scheme::Baseline || !plan.is_drop_layer(layer) {
            for st in Stage::ALL {
                stages.push(modeled(st, model.stage_cost(st, m), net));
            }
        } else {
            let half = m / 2;
            let mach =
                machinery.get(&m).ok_or_else(|| Error::Config(format!("no drop machinery measured for {m} tokens")))?;
            match scheme {
                Scheme::PreDrop => {
                    // queries and keys see every token, values only the kept half
                    let qkv = StageCost::blend(
                        model.stage_cost(Stage::Qkv, m),
                        2.0 / 3.0,
                        model.stage_cost(Stage::Qkv, half),
                        1.0 / 3.0,
                    );
                    stages.push(modeled(Stage::Qkv, qkv, net));
                    stages.push(modeled(Stage::QxK, model.stage_cost(Stage::QxK, m), net));
                    for st in &Stage::ALL[2..] {
                        stages.push(modeled(*st, model.stage_cost(*st, half), net));
                    }
                    stages.push(measured("mcn", &mach.mcn, net));
                    stages.push(measured("omsel", &mach.omsel, net));
                    stages.push(measured("drop_overhead", &mach.pre_overhead, net));
                    ledger.merge(&mach.mcn);
                    ledger.merge(&mach.omsel);
                    ledger.merge(&mach.pre_overhead);
                }
                Scheme::PostDrop => {
                    for st in &Stage::ALL[..4] {
                        stages.push(modeled(*st, model.stage_cost(*st, m), net));
                    }
                    for st in &Stage::ALL[4..] {
                        stages.push(modeled(*st, model.stage_cost(*st, half), net));
                    }
                    stages.push(measured("omsel", &mach.omsel, net));
                    stages.push(measured("drop_overhead", &mach.post_overhead, net));
                    ledger.merge(&mach.omsel);
                    ledger.merge(&mach.post_overhead);
                }
                Scheme::Baseline => unreachable!("handled above"),
            }
            m = half;
            schedule.push(m);
        }
        let time_s = stages.iter().map(|s| s.time_s).sum();
        layers.push(LayerReport { layer, tokens, stages, time_s });
    }
    if scheme == Scheme::Baseline {
        schedule.truncate(1);
    }
    let total_s = layers.iter().map(|l| l.time_s).sum();
    Ok(SchemeReport { scheme, profile: net.name.clone(), m0: plan.m0, schedule, layers, total_s, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_calibration_reproduces_reference_shares() {
        let model = StageCostModel::default();
        model.validate().unwrap();
        let lan = NetProfile::lan();
        assert!((model.layer_time(128, &lan) - 20.0).abs() < 1e-9);
        let ln = model.share_of(&[Stage::Ln2, Stage::Ln3, Stage::Ln4], 128, &lan);
        assert!((ln - 0.34).abs() < 1e-9);
        let plain: f64 = [Stage::Ln2, Stage::Ln3, Stage::Ln4].iter().map(|&s| model.plaintext_share(s)).sum();
        assert!((plain - 0.73).abs() < 1e-9);
        let (exp, rest) = model.softmax_phases(128, &lan);
        assert!(exp / (exp + rest) >= 0.8 - 1e-12);
    }

    #[test]
    fn stages_are_monotone_in_tokens() {
        let model = StageCostModel::default();
        for net in NetProfile::presets() {
            for st in Stage::ALL {
                let mut prev = 0.0;
                for m in [2, 8, 32, 64, 128, 256, 512, 1024] {
                    let t = model.stage_time(st, m, &net);
                    assert!(t >= prev, "{} at {m}", st.name());
                    prev = t;
                }
            }
        }
        let q = model.stage_cost(Stage::QxK, 256);
        assert!((q.bytes - 4.0 * 250e6).abs() < 1.0);
        let l = model.stage_cost(Stage::Ln3, 64);
        assert!((l.bytes - 75e6).abs() < 1.0);
    }

    #[test]
    fn calibration_overrides() {
        let text = "# custom\nstage.softmax.share = 0.3\nstage.gelu.scaling = quadratic\ncost.cmp.rounds = 4\nreference.profile = wan\n";
        let err = StageCostModel::from_calibration_text(text).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let text = "stage.softmax.share = 0.3\nstage.gelu.scaling = quadratic\ncost.cmp.rounds = 4\nmodel.heads = 4\n";
        let m = StageCostModel::from_calibration_text(text).unwrap();
        assert_eq!(m.calibration(Stage::Softmax).share, 0.3);
        assert_eq!(m.calibration(Stage::Gelu).scaling, Scaling::Quadratic);
        assert_eq!(m.costs.cmp.rounds, 4);
        assert_eq!(m.heads, 4);
        assert!(StageCostModel::from_calibration_text("stage.foo.share = 1").is_err());
        assert!(StageCostModel::from_calibration_text("stage.qkv.share = x").is_err());
        assert!(StageCostModel::from_calibration_text("stage.qkv.megabytes = 1e6").is_err());
    }

    #[test]
    fn scheme_names() {
        assert_eq!("pre".parse::<Scheme>().unwrap(), Scheme::PreDrop);
        assert_eq!("post_drop".parse::<Scheme>().unwrap(), Scheme::PostDrop);
        assert!("all".parse::<Scheme>().is_err());
    }

    #[test]
    fn zero_drop_plan_is_identical() {
        let model = StageCostModel::default();
        let plan = DropPlan::no_drop(128).unwrap();
        let lan = NetProfile::lan();
        let none = BTreeMap::new();
        let totals: Vec<f64> =
            Scheme::ALL.iter().map(|&s| model_scheme_cost(&plan, s, &model, &lan, &none).unwrap().total_s).collect();
        assert_eq!(totals[0], totals[1]);
        assert_eq!(totals[0], totals[2]);
    }

    #[test]
    fn ordering_and_schedule() {
        let model = StageCostModel::default();
        let plan = DropPlan::three_drop(128).unwrap();
        let mach = measure_plan_machinery(&model, &plan, CompactionNetwork::Shift, &OmselConfig::default(), 1).unwrap();
        for net in NetProfile::presets() {
            let r: Vec<SchemeReport> =
                Scheme::ALL.iter().map(|&s| model_scheme_cost(&plan, s, &model, &net, &mach).unwrap()).collect();
            assert!(r[2].total_s < r[1].total_s && r[1].total_s < r[0].total_s, "{}", net.name);
            assert_eq!(r[2].schedule, vec![128, 64, 32, 16]);
            assert_eq!(r[0].schedule, vec![128]);
            let parts: f64 = r[2].layers.iter().flat_map(|l| &l.stages).map(|s| s.time_s).sum();
            assert!((parts - r[2].total_s).abs() < 1e-9);
            assert!(r[2].ledger.cmp > 0);
        }
    }
}
