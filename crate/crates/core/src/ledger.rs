//! Operation and communication accounting.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::{CostTable, NetProfile, OpKind};

/// Label attributing charges to a part of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Untagged,
    /// Row maxima; already paid for by the Softmax stage.
    Softmax,
    Mcn,
    Omsel,
    Bitonic,
    DropOverhead,
}

impl StageTag {
    pub fn name(self) -> &'static str {
        match self {
            StageTag::Untagged => "untagged",
            StageTag::Softmax => "softmax",
            StageTag::Mcn => "mcn",
            StageTag::Omsel => "omsel",
            StageTag::Bitonic => "bitonic",
            StageTag::DropOverhead => "drop_overhead",
        }
    }
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Counters for one attribution bucket.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OpTally {
    pub cmp: u64,
    pub mux: u64,
    pub mul: u64,
    pub recip: u64,
    pub div: u64,
    pub trunc: u64,
    pub open: u64,
    pub bitdec: u64,
    pub rounds: u64,
    pub bytes: u64,
    pub compute_s: f64,
}

impl OpTally {
    pub fn count(&self, kind: OpKind) -> u64 {
        match kind {
            OpKind::Cmp => self.cmp,
            OpKind::Mux => self.mux,
            OpKind::Mul => self.mul,
            OpKind::Recip => self.recip,
            OpKind::Div => self.div,
            OpKind::Trunc => self.trunc,
            OpKind::Open => self.open,
            OpKind::BitDec => self.bitdec,
        }
    }

    fn count_mut(&mut self, kind: OpKind) -> &mut u64 {
        match kind {
            OpKind::Cmp => &mut self.cmp,
            OpKind::Mux => &mut self.mux,
            OpKind::Mul => &mut self.mul,
            OpKind::Recip => &mut self.recip,
            OpKind::Div => &mut self.div,
            OpKind::Trunc => &mut self.trunc,
            OpKind::Open => &mut self.open,
            OpKind::BitDec => &mut self.bitdec,
        }
    }

    pub fn merge(&mut self, other: &OpTally) {
        for k in OpKind::ALL {
            *self.count_mut(k) += other.count(k);
        }
        self.rounds += other.rounds;
        self.bytes += other.bytes;
        self.compute_s += other.compute_s;
    }

    /// `self - earlier`, for measuring a span of work.
    pub fn since(&self, earlier: &OpTally) -> OpTally {
        let mut out = *self;
        for k in OpKind::ALL {
            *out.count_mut(k) -= earlier.count(k);
        }
        out.rounds -= earlier.rounds;
        out.bytes -= earlier.bytes;
        out.compute_s -= earlier.compute_s;
        out
    }

    /// Scales every counter by `factor`.
    pub fn times(&self, factor: u64) -> OpTally {
        let mut out = *self;
        for k in OpKind::ALL {
            *out.count_mut(k) *= factor;
        }
        out.rounds *= factor;
        out.bytes *= factor;
        out.compute_s *= factor as f64;
        out
    }

    pub fn time(&self, net: &NetProfile) -> f64 {
        net.time(self.compute_s, self.rounds as f64, self.bytes as f64)
    }

    /// Equal counters, and compute time equal up to summation order.
    pub fn same_charges(&self, other: &OpTally) -> bool {
        let mut a = *self;
        let mut b = *other;
        let (ca, cb) = (a.compute_s, b.compute_s);
        a.compute_s = 0.0;
        b.compute_s = 0.0;
        a == b && (ca - cb).abs() <= 1e-9 * ca.abs().max(cb.abs()).max(1e-12)
    }
}

/// Running account of everything a protocol instance has done.
///
/// Counters only ever grow. Vectorized calls are one logical batch and pay
/// their per-op round cost once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    table: CostTable,
    stage: StageTag,
    total: OpTally,
    by_stage: BTreeMap<StageTag, OpTally>,
}

impl CostLedger {
    pub fn new(table: CostTable) -> CostLedger {
        CostLedger { table, stage: StageTag::Untagged, total: OpTally::default(), by_stage: BTreeMap::new() }
    }

    pub fn table(&self) -> &CostTable {
        &self.table
    }

    pub fn stage(&self) -> StageTag {
        self.stage
    }

    /// Switches attribution; returns the previous tag.
    pub fn set_stage(&mut self, stage: StageTag) -> StageTag {
        std::mem::replace(&mut self.stage, stage)
    }

    pub fn total(&self) -> &OpTally {
        &self.total
    }

    pub fn by_stage(&self) -> &BTreeMap<StageTag, OpTally> {
        &self.by_stage
    }

    pub fn stage_tally(&self, stage: StageTag) -> OpTally {
        self.by_stage.get(&stage).copied().unwrap_or_default()
    }

    /// Charges `count` operations of `kind` issued as one batch.
    pub fn charge_batch(&mut self, kind: OpKind, count: u64) {
        if count == 0 {
            return;
        }
        let cost = self.table.get(kind);
        let mut delta = OpTally::default();
        *delta.count_mut(kind) = count;
        if kind == OpKind::Recip {
            delta.mul = count * self.table.recip_muls;
        }
        if kind == OpKind::Div {
            delta.mul = count * (self.table.recip_muls + self.table.div_extra_muls);
        }
        delta.rounds = cost.rounds;
        delta.bytes = cost.bytes * count;
        delta.compute_s = cost.compute_s * count as f64;
        self.apply(&delta);
    }

    /// Charges one stand-alone operation.
    pub fn charge(&mut self, kind: OpKind) {
        self.charge_batch(kind, 1);
    }

    /// Adds a precomputed tally under the current stage.
    pub fn apply(&mut self, delta: &OpTally) {
        self.total.merge(delta);
        self.by_stage.entry(self.stage).or_default().merge(delta);
    }
}
