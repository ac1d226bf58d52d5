//! Max-centric normalization (MCN) token scoring on the raw attention
//! matrix, before Softmax.

use serde::{Deserialize, Serialize};

use crate::cost::{CostTable, OpKind};
use crate::error::{domain, protocol, Result};
use crate::ledger::{CostLedger, OpTally, StageTag};
use crate::ring::RingElement;
use crate::session::Session;
use crate::share::{Shared, SharedVector};

/// Public scoring parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McnParams {
    /// Exponent `n` in `(x - max) / max^n`.
    pub n_exp: u32,
    /// Public shift added to every logit so that row maxima are positive.
    pub offset: f64,
}

impl Default for McnParams {
    fn default() -> Self {
        McnParams { n_exp: 2, offset: 4.0 }
    }
}

/// Secret-shared pre-Softmax attention logits, one `m x m` block per head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMatrix {
    m: usize,
    heads: Vec<SharedVector>,
}

impl AttentionMatrix {
    /// `heads[h]` holds row-major `m * m` entries.
    pub fn new(m: usize, heads: Vec<SharedVector>) -> Result<AttentionMatrix> {
        if m < 1 {
            return Err(domain("attention matrix needs m >= 1"));
        }
        if heads.is_empty() {
            return Err(domain("attention matrix needs at least one head"));
        }
        if let Some(h) = heads.iter().position(|h| h.len() != m * m) {
            return Err(protocol(format!("head {h} is not {m} x {m}")));
        }
        Ok(AttentionMatrix { m, heads })
    }

    /// Shares plaintext logits `logits[h][i][j]`.
    pub fn share_logits(session: &mut Session, logits: &[Vec<Vec<f64>>]) -> Result<AttentionMatrix> {
        let m = logits.first().map_or(0, Vec::len);
        let mut heads = Vec::with_capacity(logits.len());
        for head in logits {
            if head.len() != m || head.iter().any(|r| r.len() != m) {
                return Err(protocol("ragged attention logits"));
            }
            let flat: Vec<f64> = head.iter().flatten().copied().collect();
            heads.push(session.share_reals(&flat)?);
        }
        AttentionMatrix::new(m, heads)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head(&self, h: usize) -> &SharedVector {
        &self.heads[h]
    }

    pub fn row(&self, h: usize, i: usize) -> SharedVector {
        self.heads[h].slice(i * self.m, (i + 1) * self.m)
    }

    pub fn get(&self, h: usize, i: usize, j: usize) -> Shared {
        self.heads[h].get(i * self.m + j)
    }
}

/// One shared score per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreVector(pub SharedVector);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maximum of a row by a tournament tree: `len - 1` comparisons and
/// `len - 1` selections, one batch per tree level. Charged to the Softmax
/// stage, which needs the row maxima anyway.
pub fn secure_row_max(session: &mut Session, row: &SharedVector) -> Result<Shared> {
    if row.is_empty() {
        return Err(domain("maximum of an empty row"));
    }
    let prev = session.set_stage(StageTag::Softmax);
    let mut level = row.clone();
    while level.len() > 1 {
        let pairs = level.len() / 2;
        let left: SharedVector = (0..pairs).map(|i| level.get(2 * i)).collect();
        let right: SharedVector = (0..pairs).map(|i| level.get(2 * i + 1)).collect();
        let left_smaller = session.cmp_vec(&left, &right)?;
        let mut next = session.mux_vec(&left_smaller, &right, &left)?;
        if level.len() % 2 == 1 {
            next.push(level.get(level.len() - 1));
        }
        level = next;
    }
    session.set_stage(prev);
    Ok(level.get(0))
}

/// `(x_j - max) / max^n` for every element of a row.
pub fn mcn_row(session: &mut Session, row: &SharedVector, max: &Shared, n_exp: u32) -> Result<SharedVector> {
    if n_exp == 0 {
        return Err(domain("MCN exponent must be >= 1"));
    }
    let inv = session.recip(max)?;
    let ring = *session.ring();
    let mut out: SharedVector = row.iter().map(|x| x.sub(max, &ring)).collect();
    for _ in 0..n_exp {
        out = session.mul_fixed_by(&out, &inv);
    }
    Ok(out)
}

/// Row maxima of equal-length rows, with every tree level of every row in
/// one batch. Charged to the Softmax stage.
pub fn secure_row_max_batch(session: &mut Session, rows: &[SharedVector]) -> Result<Vec<Shared>> {
    let Some(width) = rows.first().map(SharedVector::len) else {
        return Ok(Vec::new());
    };
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(domain("row maxima need non-empty rows of equal length"));
    }
    let prev = session.set_stage(StageTag::Softmax);
    let mut levels: Vec<SharedVector> = rows.to_vec();
    let mut len = width;
    while len > 1 {
        let pairs = len / 2;
        let left: SharedVector = levels.iter().flat_map(|l| (0..pairs).map(move |i| l.get(2 * i))).collect();
        let right: SharedVector = levels.iter().flat_map(|l| (0..pairs).map(move |i| l.get(2 * i + 1))).collect();
        let left_smaller = session.cmp_vec(&left, &right)?;
        let winners = session.mux_vec(&left_smaller, &right, &left)?;
        for (r, level) in levels.iter_mut().enumerate() {
            let mut next: SharedVector = (0..pairs).map(|i| winners.get(r * pairs + i)).collect();
            if len % 2 == 1 {
                next.push(level.get(len - 1));
            }
            *level = next;
        }
        len = len.div_ceil(2);
    }
    session.set_stage(prev);
    Ok(levels.iter().map(|l| l.get(0)).collect())
}

/// Per-head MCN followed by column sums over all rows and heads. All
/// `m * heads` rows are processed together, so the round count does not
/// grow with the number of rows.
pub fn aggregate_scores(session: &mut Session, a: &AttentionMatrix, params: &McnParams) -> Result<ScoreVector> {
    if params.n_exp == 0 {
        return Err(domain("MCN exponent must be >= 1"));
    }
    let ring = *session.ring();
    let offset = ring.encode(params.offset)?;
    let m = a.m();
    let prev = session.set_stage(StageTag::Mcn);
    let rows: Vec<SharedVector> = (0..a.num_heads())
        .flat_map(|h| (0..m).map(move |i| (h, i)))
        .map(|(h, i)| a.row(h, i).iter().map(|x| x.add_public(offset, &ring)).collect())
        .collect();
    let maxima = secure_row_max_batch(session, &rows)?;
    let inv = session.recip_vec(&maxima.iter().copied().collect())?;
    let mut flat: SharedVector =
        rows.iter().zip(&maxima).flat_map(|(row, mx)| row.iter().map(move |x| x.sub(mx, &ring))).collect();
    let scale: SharedVector = inv.iter().flat_map(|s| std::iter::repeat_n(s, m)).collect();
    for _ in 0..params.n_exp {
        flat = session.mul_fixed_vec(&flat, &scale)?;
    }
    let mut scores = SharedVector::public(&vec![RingElement::ZERO; m]);
    for r in 0..rows.len() {
        let row: SharedVector = (0..m).map(|j| flat.get(r * m + j)).collect();
        scores = scores.add(&row, &ring)?;
    }
    session.set_stage(prev);
    Ok(ScoreVector(scores))
}

/// Charges of [`aggregate_scores`] outside the Softmax stage, for an
/// `m x m` matrix with `heads` heads.
pub fn mcn_cost(table: &CostTable, m: usize, heads: usize, n_exp: u32) -> OpTally {
    let mut ledger = CostLedger::new(table.clone());
    ledger.charge_batch(OpKind::Recip, (m * heads) as u64);
    for _ in 0..n_exp {
        ledger.charge_batch(OpKind::Mul, (m * m * heads) as u64);
        ledger.charge_batch(OpKind::Trunc, (m * m * heads) as u64);
    }
    *ledger.total()
}
