//! Half-and-half token drop: keep bits from the median, oblivious
//! compaction of the kept tokens to the front, public truncation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{CostTable, OpKind};
use crate::error::{domain, protocol, Error, Result};
use crate::ledger::{CostLedger, OpTally, StageTag};
use crate::mcn::{aggregate_scores, AttentionMatrix, McnParams};
use crate::omsel::{omsel, tie_bits, tie_break_keys, OmselConfig};
use crate::ring::RingElement;
use crate::session::Session;
use crate::share::{Shared, SharedVector};

/// `m` tokens of width `d`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMatrix {
    m: usize,
    d: usize,
    rows: SharedVector,
}

impl TokenMatrix {
    pub fn new(m: usize, d: usize, rows: SharedVector) -> Result<TokenMatrix> {
        if rows.len() != m * d {
            return Err(protocol(format!("token matrix {m} x {d} given {} entries", rows.len())));
        }
        Ok(TokenMatrix { m, d, rows })
    }

    pub fn share_reals(session: &mut Session, rows: &[Vec<f64>]) -> Result<TokenMatrix> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(protocol("ragged token matrix"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let shared = session.share_reals(&flat)?;
        TokenMatrix::new(rows.len(), d, shared)
    }

    pub fn from_rows(d: usize, rows: &[SharedVector]) -> Result<TokenMatrix> {
        let mut flat = SharedVector::default();
        for r in rows {
            if r.len() != d {
                return Err(protocol(format!("token row of width {} where {d} expected", r.len())));
            }
            flat.extend_from(r);
        }
        TokenMatrix::new(rows.len(), d, flat)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn entries(&self) -> &SharedVector {
        &self.rows
    }

    pub fn row(&self, i: usize) -> SharedVector {
        self.rows.slice(i * self.d, (i + 1) * self.d)
    }

    pub fn rows(&self) -> Vec<SharedVector> {
        (0..self.m).map(|i| self.row(i)).collect()
    }
}

/// Public layer-wise drop schedule. Layers are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropPlan {
    pub m0: usize,
    pub layers: usize,
    pub drop_layers: Vec<usize>,
}

impl DropPlan {
    pub fn new(m0: usize, layers: usize, mut drop_layers: Vec<usize>) -> Result<DropPlan> {
        drop_layers.sort_unstable();
        drop_layers.dedup();
        if let Some(&l) = drop_layers.iter().find(|&&l| l == 0 || l > layers) {
            return Err(Error::Config(format!("drop layer {l} outside 1..={layers}")));
        }
        let shrink = 1usize.checked_shl(drop_layers.len() as u32).unwrap_or(0);
        if m0 < 2 || shrink == 0 || m0 % shrink != 0 || m0 / shrink < 1 {
            return Err(Error::Config(format!("{m0} tokens cannot be halved {} times", drop_layers.len())));
        }
        Ok(DropPlan { m0, layers, drop_layers })
    }

    /// Twelve layers, dropping at layers 1, 5 and 8.
    pub fn three_drop(m0: usize) -> Result<DropPlan> {
        DropPlan::new(m0, 12, vec![1, 5, 8])
    }

    pub fn no_drop(m0: usize) -> Result<DropPlan> {
        DropPlan::new(m0, 12, Vec::new())
    }

    pub fn is_drop_layer(&self, layer: usize) -> bool {
        self.drop_layers.binary_search(&layer).is_ok()
    }

    /// Tokens entering `layer`.
    pub fn tokens_at(&self, layer: usize) -> usize {
        let before = self.drop_layers.iter().filter(|&&l| l < layer).count();
        self.m0 >> before
    }

    /// Token count at the start and after every drop, e.g. `128, 64, 32, 16`.
    pub fn schedule(&self) -> Vec<usize> {
        (0..=self.drop_layers.len()).map(|k| self.m0 >> k).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompactionNetwork {
    /// Order-preserving shifts by powers of two, `ceil(log2 n)` levels.
    #[default]
    Shift,
    /// Odd-even transposition, `n` passes.
    Transposition,
}

impl CompactionNetwork {
    pub fn name(self) -> &'static str {
        match self {
            CompactionNetwork::Shift => "shift",
            CompactionNetwork::Transposition => "transposition",
        }
    }
}

impl fmt::Display for CompactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompactionNetwork {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(CompactionNetwork::Shift),
            "transposition" => Ok(CompactionNetwork::Transposition),
            _ => Err(Error::Config(format!("unknown compaction network {s:?}"))),
        }
    }
}

/// `[threshold < scores[i]]` for every `i`.
pub fn keep_bits(session: &mut Session, scores: &SharedVector, threshold: &Shared) -> SharedVector {
    session.cmp_scalar_vec(threshold, scores)
}

/// Move decisions of one compaction. They depend only on the keep bits,
/// so other rows selected by the same bits can be compacted by replaying
/// them, paying only for the data selections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactionSchedule {
    pub network: CompactionNetwork,
    pub n: usize,
    pub keep: usize,
    /// Selector bits per network stage.
    pub steps: Vec<Vec<Shared>>,
}

/// Moves the rows whose bit is 1 to the front, preserving their order, and
/// returns the first `keep` rows. All rows must have the same width.
pub fn oblivious_compact(
    session: &mut Session,
    rows: &[SharedVector],
    bits: &SharedVector,
    keep: usize,
    network: CompactionNetwork,
) -> Result<Vec<SharedVector>> {
    Ok(oblivious_compact_scheduled(session, rows, bits, keep, network)?.0)
}

/// As [`oblivious_compact`], also returning the schedule for replay.
pub fn oblivious_compact_scheduled(
    session: &mut Session,
    rows: &[SharedVector],
    bits: &SharedVector,
    keep: usize,
    network: CompactionNetwork,
) -> Result<(Vec<SharedVector>, CompactionSchedule)> {
    let n = rows.len();
    if bits.len() != n {
        return Err(protocol(format!("{} keep bits for {n} rows", bits.len())));
    }
    if keep > n {
        return Err(domain(format!("cannot keep {keep} of {n} rows")));
    }
    if let Some(w) = rows.first().map(SharedVector::len) {
        if rows.iter().any(|r| r.len() != w) {
            return Err(protocol("rows to compact differ in width"));
        }
    }
    if session.is_strict() {
        let kept: u64 = bits.reconstruct(session.ring()).iter().map(|b| b.0).sum();
        if kept != keep as u64 {
            return Err(protocol(format!("keep bits select {kept} rows, expected {keep}")));
        }
    }
    let (mut out, steps) = match network {
        CompactionNetwork::Shift => shift_network(session, rows, bits)?,
        CompactionNetwork::Transposition => transposition_network(session, rows, bits)?,
    };
    out.truncate(keep);
    Ok((out, CompactionSchedule { network, n, keep, steps }))
}

/// Compacts `rows` with the decisions recorded in `schedule`.
pub fn replay_compaction(
    session: &mut Session,
    rows: &[SharedVector],
    schedule: &CompactionSchedule,
) -> Result<Vec<SharedVector>> {
    let n = schedule.n;
    if rows.len() != n {
        return Err(protocol(format!("schedule is for {n} rows, got {}", rows.len())));
    }
    let ring = *session.ring();
    let mut slots = rows.to_vec();
    match schedule.network {
        CompactionNetwork::Shift => {
            for (level, selectors) in schedule.steps.iter().enumerate() {
                let step = (1usize << level).min(n);
                let targets = selectors.len();
                let moved = session.mux_rows(selectors, &slots[step..], &slots[..targets])?;
                for (p, v) in moved.into_iter().enumerate() {
                    slots[p] = v;
                }
            }
        }
        CompactionNetwork::Transposition => {
            for (pass, selectors) in schedule.steps.iter().enumerate() {
                if selectors.is_empty() {
                    continue;
                }
                let pairs: Vec<usize> = (pass % 2..n.saturating_sub(1)).step_by(2).collect();
                let right: Vec<SharedVector> = pairs.iter().map(|&i| slots[i + 1].clone()).collect();
                let left: Vec<SharedVector> = pairs.iter().map(|&i| slots[i].clone()).collect();
                let new_left = session.mux_rows(selectors, &right, &left)?;
                for (t, &i) in pairs.iter().enumerate() {
                    slots[i + 1] = left[t].add(&right[t], &ring)?.sub(&new_left[t], &ring)?;
                    slots[i] = new_left[t].clone();
                }
            }
        }
    }
    slots.truncate(schedule.keep);
    Ok(slots)
}

fn concat(a: &SharedVector, b: &SharedVector) -> SharedVector {
    let mut out = a.clone();
    out.extend_from(b);
    out
}

type Scheduled = (Vec<SharedVector>, Vec<Vec<Shared>>);

fn shift_network(session: &mut Session, rows: &[SharedVector], bits: &SharedVector) -> Result<Scheduled> {
    let n = rows.len();
    let levels = tie_bits(n) as usize;
    if levels == 0 {
        return Ok((rows.to_vec(), Vec::new()));
    }
    let ring = *session.ring();
    let width = rows[0].len();

    // zeros before position i, then zeroed for dropped rows
    let mut zeros = Vec::with_capacity(n);
    let mut ones = Shared::default();
    for i in 0..n {
        zeros.push(ones.neg(&ring).add_public(RingElement(i as u64), &ring));
        ones = ones.add(&bits.get(i), &ring);
    }
    let zeros: SharedVector = zeros.into_iter().collect();
    let shift = session.mul_ring_vec(bits, &zeros)?;
    let shift_bits = session.bit_decompose_vec(&shift, levels as u32)?;

    // each slot carries its row followed by the not yet applied shift bits
    let mut slots: Vec<SharedVector> = (0..n)
        .map(|i| {
            let pending: SharedVector = (1..levels).map(|j| shift_bits[j].get(i)).collect();
            concat(&rows[i], &pending)
        })
        .collect();
    let mut moving: SharedVector = shift_bits[0].clone();
    let mut steps = Vec::with_capacity(levels);

    for level in 0..levels {
        let step = 1 << level;
        let pending = levels - level - 1;
        // a slot whose occupant leaves must not move again at later levels
        let mut resident = slots.clone();
        if pending > 0 {
            let mut tails = SharedVector::default();
            let mut stays = SharedVector::default();
            for (i, slot) in slots.iter().enumerate() {
                let stay = moving.get(i).neg(&ring).add_public(RingElement(1), &ring);
                for t in 0..pending {
                    tails.push(slot.get(width + t));
                    stays.push(stay);
                }
            }
            let cleared = session.mul_ring_vec(&tails, &stays)?;
            for (i, slot) in resident.iter_mut().enumerate() {
                for t in 0..pending {
                    slot.set(width + t, cleared.get(i * pending + t));
                }
            }
        }
        let targets = n.saturating_sub(step);
        let selectors: Vec<Shared> = (0..targets).map(|p| moving.get(p + step)).collect();
        let incoming: Vec<SharedVector> = slots[step.min(n)..].to_vec();
        let moved = session.mux_rows(&selectors, &incoming, &resident[..targets])?;
        for (p, v) in moved.into_iter().enumerate() {
            resident[p] = v;
        }
        steps.push(selectors);
        slots = resident;
        if pending == 0 {
            break;
        }
        // the next pending bit becomes the move flag
        moving = slots.iter().map(|s| s.get(width)).collect();
        for slot in &mut slots {
            let len = slot.len();
            let rest = slot.slice(width + 1, len);
            *slot = concat(&slot.slice(0, width), &rest);
        }
    }
    Ok((slots.into_iter().map(|s| s.slice(0, width)).collect(), steps))
}

fn transposition_network(session: &mut Session, rows: &[SharedVector], bits: &SharedVector) -> Result<Scheduled> {
    let n = rows.len();
    let ring = *session.ring();
    let width = rows.first().map_or(0, SharedVector::len);
    let mut slots: Vec<SharedVector> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut s = r.clone();
            s.push(bits.get(i));
            s
        })
        .collect();
    let mut steps = Vec::with_capacity(n);
    for pass in 0..n {
        let pairs: Vec<usize> = (pass % 2..n.saturating_sub(1)).step_by(2).collect();
        if pairs.is_empty() {
            steps.push(Vec::new());
            continue;
        }
        // swap when the left slot is dropped and the right one kept
        let left_dropped: SharedVector =
            pairs.iter().map(|&i| slots[i].get(width).neg(&ring).add_public(RingElement(1), &ring)).collect();
        let right_kept: SharedVector = pairs.iter().map(|&i| slots[i + 1].get(width)).collect();
        let swap = session.mul_ring_vec(&left_dropped, &right_kept)?;
        let selectors: Vec<Shared> = swap.iter().collect();
        let right: Vec<SharedVector> = pairs.iter().map(|&i| slots[i + 1].clone()).collect();
        let left: Vec<SharedVector> = pairs.iter().map(|&i| slots[i].clone()).collect();
        let new_left = session.mux_rows(&selectors, &right, &left)?;
        for (t, &i) in pairs.iter().enumerate() {
            let total = left[t].add(&right[t], &ring)?;
            slots[i + 1] = total.sub(&new_left[t], &ring)?;
            slots[i] = new_left[t].clone();
        }
        steps.push(selectors);
    }
    Ok((slots.into_iter().map(|s| s.slice(0, width)).collect(), steps))
}

/// Ledger charges of compacting `n` rows of width `width`, without running
/// the network. Matches what [`oblivious_compact`] records.
pub fn compaction_cost(table: &CostTable, n: usize, width: usize, network: CompactionNetwork) -> OpTally {
    let mut ledger = CostLedger::new(table.clone());
    let n64 = n as u64;
    match network {
        CompactionNetwork::Shift => {
            let levels = tie_bits(n) as usize;
            if levels > 0 {
                ledger.charge_batch(OpKind::Mul, n64);
                ledger.charge_batch(OpKind::BitDec, n64 * levels as u64);
                for level in 0..levels {
                    let pending = (levels - level - 1) as u64;
                    ledger.charge_batch(OpKind::Mul, n64 * pending);
                    let targets = n.saturating_sub(1 << level) as u64;
                    ledger.charge_batch(OpKind::Mux, targets * (width as u64 + pending));
                }
            }
        }
        CompactionNetwork::Transposition => {
            for pass in 0..n {
                let pairs = (pass % 2..n.saturating_sub(1)).step_by(2).count() as u64;
                ledger.charge_batch(OpKind::Mul, pairs);
                ledger.charge_batch(OpKind::Mux, pairs * (width as u64 + 1));
            }
        }
    }
    *ledger.total()
}

/// Ledger charges of [`replay_compaction`] on `n` rows of width `width`.
pub fn replay_cost(table: &CostTable, n: usize, width: usize, network: CompactionNetwork) -> OpTally {
    let mut ledger = CostLedger::new(table.clone());
    match network {
        CompactionNetwork::Shift => {
            for level in 0..tie_bits(n) as usize {
                let targets = n.saturating_sub(1 << level) as u64;
                ledger.charge_batch(OpKind::Mux, targets * width as u64);
            }
        }
        CompactionNetwork::Transposition => {
            for pass in 0..n {
                let pairs = (pass % 2..n.saturating_sub(1)).step_by(2).count() as u64;
                ledger.charge_batch(OpKind::Mux, pairs * width as u64);
            }
        }
    }
    *ledger.total()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DropConfig {
    pub mcn: McnParams,
    pub omsel: OmselConfig,
    pub network: CompactionNetwork,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropOutcome {
    pub attention: AttentionMatrix,
    pub v_input: TokenMatrix,
    pub residual: TokenMatrix,
    /// Keep bits over the input tokens; empty when nothing was dropped.
    pub keep: SharedVector,
    pub median: Option<Shared>,
    pub rounds: u32,
    pub fell_back: bool,
}

/// Scores the tokens of `layer` from the raw attention logits and, if the
/// plan drops there, removes the lower half from the attention rows and
/// columns, the value-projection input and the residual stream.
pub fn drop_site(
    session: &mut Session,
    attention: &AttentionMatrix,
    v_input: &TokenMatrix,
    residual: &TokenMatrix,
    plan: &DropPlan,
    layer: usize,
    config: &DropConfig,
) -> Result<DropOutcome> {
    let m = attention.m();
    if v_input.m() != m || residual.m() != m {
        return Err(protocol("attention, value input and residual disagree on token count"));
    }
    if !plan.is_drop_layer(layer) {
        return Ok(DropOutcome {
            attention: attention.clone(),
            v_input: v_input.clone(),
            residual: residual.clone(),
            keep: SharedVector::default(),
            median: None,
            rounds: 0,
            fell_back: false,
        });
    }
    if m % 2 != 0 {
        return Err(domain(format!("cannot halve {m} tokens")));
    }
    let half = m / 2;
    let heads = attention.num_heads();

    let scores = aggregate_scores(session, attention, &config.mcn)?;
    let selection = omsel(session, &scores.0, &config.omsel)?;
    let prev = session.set_stage(StageTag::DropOverhead);
    let keys = tie_break_keys(session, &scores.0);
    let keep = keep_bits(session, &keys, &selection.median_key);

    // rows: attention rows of every head, value input and residual together
    let rows: Vec<SharedVector> = (0..m)
        .map(|i| {
            let mut r = SharedVector::default();
            for h in 0..heads {
                r.extend_from(&attention.row(h, i));
            }
            r.extend_from(&v_input.row(i));
            r.extend_from(&residual.row(i));
            r
        })
        .collect();
    let (kept_rows, schedule) = oblivious_compact_scheduled(session, &rows, &keep, half, config.network)?;

    // columns of the row-reduced attention, moved by the same decisions
    let cols: Vec<SharedVector> = (0..m)
        .map(|j| {
            let mut c = SharedVector::default();
            for h in 0..heads {
                for row in &kept_rows {
                    c.push(row.get(h * m + j));
                }
            }
            c
        })
        .collect();
    let kept_cols = replay_compaction(session, &cols, &schedule)?;
    session.set_stage(prev);

    let new_heads: Vec<SharedVector> = (0..heads)
        .map(|h| {
            let mut flat = SharedVector::default();
            for r in 0..half {
                for col in &kept_cols {
                    flat.push(col.get(h * half + r));
                }
            }
            flat
        })
        .collect();
    let (d_v, d_r) = (v_input.d(), residual.d());
    let v_rows: Vec<SharedVector> = kept_rows.iter().map(|r| r.slice(heads * m, heads * m + d_v)).collect();
    let r_rows: Vec<SharedVector> = kept_rows.iter().map(|r| r.slice(heads * m + d_v, heads * m + d_v + d_r)).collect();

    Ok(DropOutcome {
        attention: AttentionMatrix::new(half, new_heads)?,
        v_input: TokenMatrix::from_rows(d_v, &v_rows)?,
        residual: TokenMatrix::from_rows(d_r, &r_rows)?,
        keep,
        median: Some(selection.median),
        rounds: selection.rounds,
        fell_back: selection.fell_back,
    })
}
