//! A single protocol instance: both parties in lockstep, the trusted dealer,
//! the cost ledger and the optional access-pattern trace.

use serde::{Deserialize, Serialize};

use crate::cost::{CostTable, OpKind};
use crate::dealer::{BeaverTriple, Dealer};
use crate::error::{domain, protocol, Result};
use crate::ledger::{CostLedger, StageTag};
use crate::ring::{RingElement, RingParams};
use crate::share::{Shared, SharedVector};
use crate::trace::{Trace, TraceEvent, TraceOp};

/// A shared value whose reconstruction is 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SharedBit(pub Shared);

impl SharedBit {
    pub fn public(bit: bool) -> SharedBit {
        SharedBit(Shared::public(RingElement(u64::from(bit))))
    }

    pub fn value(&self) -> Shared {
        self.0
    }

    /// `1 - b`, computed locally.
    pub fn not(&self, ring: &RingParams) -> SharedBit {
        SharedBit(self.0.neg(ring).add_public(RingElement(1), ring))
    }
}

#[derive(Debug, Default, Clone)]
struct UsedTriples {
    words: Vec<u64>,
}

impl UsedTriples {
    /// Marks `id` as consumed; returns false if it already was.
    fn mark(&mut self, id: u64) -> bool {
        let (w, b) = ((id / 64) as usize, id % 64);
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }
}

pub struct Session {
    ring: RingParams,
    dealer: Dealer,
    ledger: CostLedger,
    used: UsedTriples,
    trace: Option<Trace>,
    trace_round: Option<u32>,
    strict: bool,
}

impl Session {
    pub fn new(ring: RingParams, seed: u64) -> Session {
        Session::with_costs(ring, CostTable::for_ring(&ring), seed)
    }

    pub fn with_costs(ring: RingParams, table: CostTable, seed: u64) -> Session {
        Session {
            ring,
            dealer: Dealer::new(ring, seed),
            ledger: CostLedger::new(table),
            used: UsedTriples::default(),
            trace: None,
            trace_round: None,
            strict: true,
        }
    }

    #[inline]
    pub fn ring(&self) -> &RingParams {
        &self.ring
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut CostLedger {
        &mut self.ledger
    }

    pub fn dealer_mut(&mut self) -> &mut Dealer {
        &mut self.dealer
    }

    /// When set (the default), the dealer validates selector bits and
    /// similar preconditions on reconstructed values.
    pub fn set_strict(&mut self, strict: bool) {
        self.strict = strict;
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn set_stage(&mut self, stage: StageTag) -> StageTag {
        self.ledger.set_stage(stage)
    }

    // ---- tracing -------------------------------------------------------

    pub fn enable_trace(&mut self) {
        self.trace = Some(Trace::default());
    }

    pub fn take_trace(&mut self) -> Option<Trace> {
        self.trace.take()
    }

    /// Sets the selection round that primitive calls are recorded under;
    /// `None` pauses recording.
    pub fn set_trace_round(&mut self, round: Option<u32>) {
        self.trace_round = round;
    }

    fn record(&mut self, op: TraceOp, len: Option<usize>) {
        let (Some(trace), Some(round)) = (self.trace.as_mut(), self.trace_round) else {
            return;
        };
        match len {
            Some(n) => (0..n).for_each(|i| trace.push(TraceEvent { round, op, index: Some(i) })),
            None => trace.push(TraceEvent { round, op, index: None }),
        }
    }

    // ---- sharing helpers -----------------------------------------------

    pub fn share(&mut self, x: RingElement) -> Shared {
        self.dealer.share(x)
    }

    pub fn share_vec(&mut self, xs: &[RingElement]) -> SharedVector {
        xs.iter().map(|&x| self.dealer.share(x)).collect()
    }

    pub fn share_reals(&mut self, xs: &[f64]) -> Result<SharedVector> {
        let ring = self.ring;
        let enc = xs.iter().map(|&x| ring.encode(x)).collect::<Result<Vec<_>>>()?;
        Ok(self.share_vec(&enc))
    }

    /// Reconstructs without charging. Test and oracle instrumentation only.
    pub fn peek(&self, x: &Shared) -> RingElement {
        x.reconstruct(&self.ring)
    }

    pub fn peek_signed(&self, x: &Shared) -> i64 {
        self.ring.to_signed(self.peek(x))
    }

    pub fn peek_real(&self, x: &Shared) -> f64 {
        self.ring.decode(self.peek(x))
    }

    /// Opens a value to both parties.
    pub fn open(&mut self, x: &Shared) -> RingElement {
        self.ledger.charge(OpKind::Open);
        self.record(TraceOp::Open, None);
        self.peek(x)
    }

    // ---- multiplication --------------------------------------------------

    fn beaver(&self, x: &Shared, y: &Shared, t: &BeaverTriple) -> Shared {
        let r = &self.ring;
        // Both parties publish their shares of d = x - a and e = y - b.
        let d = x.sub(&t.a, r).reconstruct(r);
        let e = y.sub(&t.b, r).reconstruct(r);
        let mut z = [RingElement::ZERO; 2];
        for (p, zp) in z.iter_mut().enumerate() {
            let mut v = r.add(t.c.shares[p], r.mul(d, t.b.shares[p]));
            v = r.add(v, r.mul(e, t.a.shares[p]));
            if p == 0 {
                v = r.add(v, r.mul(d, e));
            }
            *zp = v;
        }
        Shared { shares: z }
    }

    /// Ring product with a caller-supplied triple. Each triple works once.
    pub fn mul_beaver(&mut self, x: &Shared, y: &Shared, triple: &BeaverTriple) -> Result<Shared> {
        if !self.used.mark(triple.id) {
            return Err(protocol(format!("Beaver triple {} already consumed", triple.id)));
        }
        self.ledger.charge(OpKind::Mul);
        self.record(TraceOp::Mul, None);
        Ok(self.beaver(x, y, triple))
    }

    fn fresh_product(&mut self, x: &Shared, y: &Shared) -> Shared {
        let t = self.dealer.triple();
        let fresh = self.used.mark(t.id);
        debug_assert!(fresh);
        self.beaver(x, y, &t)
    }

    /// Ring product (no rescaling), e.g. bit times value.
    pub fn mul_ring(&mut self, x: &Shared, y: &Shared) -> Shared {
        self.ledger.charge(OpKind::Mul);
        self.record(TraceOp::Mul, None);
        self.fresh_product(x, y)
    }

    /// Fixed-point product: ring product followed by truncation by `f`.
    pub fn mul_fixed(&mut self, x: &Shared, y: &Shared) -> Shared {
        let p = self.mul_ring(x, y);
        self.truncate(&p)
    }

    /// Element-wise ring products as one batch.
    pub fn mul_ring_vec(&mut self, xs: &SharedVector, ys: &SharedVector) -> Result<SharedVector> {
        check_len(xs, ys)?;
        self.ledger.charge_batch(OpKind::Mul, xs.len() as u64);
        self.record(TraceOp::Mul, Some(xs.len()));
        Ok(xs.iter().zip(ys.iter()).map(|(x, y)| self.fresh_product(&x, &y)).collect())
    }

    pub fn mul_fixed_vec(&mut self, xs: &SharedVector, ys: &SharedVector) -> Result<SharedVector> {
        let p = self.mul_ring_vec(xs, ys)?;
        Ok(self.truncate_vec(&p))
    }

    /// Every element times the same shared scalar, fixed-point.
    pub fn mul_fixed_by(&mut self, xs: &SharedVector, s: &Shared) -> SharedVector {
        self.ledger.charge_batch(OpKind::Mul, xs.len() as u64);
        let p: SharedVector = xs.iter().map(|x| self.fresh_product(&x, s)).collect();
        self.truncate_vec(&p)
    }

    // ---- truncation -------------------------------------------------------

    fn reshare(&mut self, v: RingElement) -> Shared {
        self.dealer.share(v)
    }

    /// Faithful fixed-point truncation, evaluated by the dealer.
    pub fn truncate(&mut self, x: &Shared) -> Shared {
        self.ledger.charge(OpKind::Trunc);
        let v = self.ring.truncate(self.peek(x));
        self.reshare(v)
    }

    pub fn truncate_vec(&mut self, xs: &SharedVector) -> SharedVector {
        self.ledger.charge_batch(OpKind::Trunc, xs.len() as u64);
        let ring = self.ring;
        xs.iter().map(|x| ring.truncate(x.reconstruct(&ring))).map(|v| self.reshare(v)).collect()
    }

    /// Exact arithmetic shift right by `bits` (floor), evaluated by the dealer.
    pub fn shift_right(&mut self, x: &Shared, bits: u32) -> Shared {
        self.ledger.charge(OpKind::Trunc);
        let v = self.peek_signed(x) >> bits;
        let v = self.ring.from_signed(v);
        self.reshare(v)
    }

    // ---- comparison and selection -----------------------------------------

    fn less_than(&mut self, x: &Shared, y: &Shared) -> SharedBit {
        let bit = self.ring.lt(self.peek(x), self.peek(y));
        SharedBit(self.reshare(RingElement(u64::from(bit))))
    }

    /// `[x < y]` under the signed interpretation; equality gives 0.
    pub fn cmp(&mut self, x: &Shared, y: &Shared) -> SharedBit {
        self.ledger.charge(OpKind::Cmp);
        self.record(TraceOp::Cmp, None);
        self.less_than(x, y)
    }

    /// `[xs[i] < ys[i]]` for all `i`, one batch.
    pub fn cmp_vec(&mut self, xs: &SharedVector, ys: &SharedVector) -> Result<SharedVector> {
        check_len(xs, ys)?;
        self.ledger.charge_batch(OpKind::Cmp, xs.len() as u64);
        self.record(TraceOp::Cmp, Some(xs.len()));
        Ok(xs.iter().zip(ys.iter()).map(|(x, y)| self.less_than(&x, &y).0).collect())
    }

    /// `[xs[i] < y]` for all `i`, one batch.
    pub fn cmp_vec_scalar(&mut self, xs: &SharedVector, y: &Shared) -> SharedVector {
        self.ledger.charge_batch(OpKind::Cmp, xs.len() as u64);
        self.record(TraceOp::Cmp, Some(xs.len()));
        xs.iter().map(|x| self.less_than(&x, y).0).collect()
    }

    /// `[x < ys[i]]` for all `i`, one batch.
    pub fn cmp_scalar_vec(&mut self, x: &Shared, ys: &SharedVector) -> SharedVector {
        self.ledger.charge_batch(OpKind::Cmp, ys.len() as u64);
        self.record(TraceOp::Cmp, Some(ys.len()));
        ys.iter().map(|y| self.less_than(x, &y).0).collect()
    }

    fn check_bit(&self, c: &Shared) -> Result<()> {
        if self.strict && self.peek(c).0 > 1 {
            return Err(protocol("multiplexer selector does not reconstruct to a bit"));
        }
        Ok(())
    }

    fn select(&mut self, c: &Shared, a: &Shared, b: &Shared) -> Shared {
        // b + c * (a - b)
        let diff = a.sub(b, &self.ring);
        let prod = self.fresh_product(c, &diff);
        b.add(&prod, &self.ring)
    }

    /// `c ? a : b`.
    pub fn mux(&mut self, c: &SharedBit, a: &Shared, b: &Shared) -> Result<Shared> {
        self.check_bit(&c.0)?;
        self.ledger.charge(OpKind::Mux);
        self.record(TraceOp::Mux, None);
        Ok(self.select(&c.0, a, b))
    }

    /// Element-wise `cs[i] ? as_[i] : bs[i]`, one batch.
    pub fn mux_vec(&mut self, cs: &SharedVector, as_: &SharedVector, bs: &SharedVector) -> Result<SharedVector> {
        check_len(cs, as_)?;
        check_len(cs, bs)?;
        for c in cs.iter() {
            self.check_bit(&c)?;
        }
        self.ledger.charge_batch(OpKind::Mux, cs.len() as u64);
        self.record(TraceOp::Mux, Some(cs.len()));
        Ok((0..cs.len()).map(|i| self.select(&cs.get(i), &as_.get(i), &bs.get(i))).collect())
    }

    /// Row-wise select: every element of row `i` uses selector `cs[i]`.
    /// Charged as one batch of `rows * width` multiplexers.
    pub fn mux_rows(&mut self, cs: &[Shared], as_: &[SharedVector], bs: &[SharedVector]) -> Result<Vec<SharedVector>> {
        if cs.len() != as_.len() || cs.len() != bs.len() {
            return Err(protocol("row multiplexer arity mismatch"));
        }
        let mut total = 0u64;
        for ((c, a), b) in cs.iter().zip(as_).zip(bs) {
            self.check_bit(c)?;
            check_len(a, b)?;
            total += a.len() as u64;
        }
        self.ledger.charge_batch(OpKind::Mux, total);
        let mut out = Vec::with_capacity(cs.len());
        for ((c, a), b) in cs.iter().zip(as_).zip(bs) {
            out.push((0..a.len()).map(|j| self.select(c, &a.get(j), &b.get(j))).collect());
        }
        Ok(out)
    }

    // ---- arithmetic ideal functionalities ---------------------------------

    /// Fixed-point `1/x` for positive `x`.
    pub fn recip(&mut self, x: &Shared) -> Result<Shared> {
        let v = self.peek(x);
        let inv = self
            .ring
            .fixed_recip(v)
            .ok_or_else(|| domain(format!("reciprocal of non-positive value {}", self.ring.decode(v))))?;
        self.ledger.charge(OpKind::Recip);
        Ok(self.reshare(inv))
    }

    /// Fixed-point reciprocals of a batch of positive values.
    pub fn recip_vec(&mut self, xs: &SharedVector) -> Result<SharedVector> {
        let ring = self.ring;
        let inv = xs
            .iter()
            .map(|x| {
                let v = x.reconstruct(&ring);
                ring.fixed_recip(v)
                    .ok_or_else(|| domain(format!("reciprocal of non-positive value {}", ring.decode(v))))
            })
            .collect::<Result<Vec<_>>>()?;
        self.ledger.charge_batch(OpKind::Recip, xs.len() as u64);
        Ok(inv.into_iter().map(|v| self.reshare(v)).collect())
    }

    /// `x / n` for a public positive integer `n`.
    ///
    /// Each party divides its own share; no interaction. The result is off
    /// by at most one unit in the last place, except with probability about
    /// `|x| / 2^ell` when the random mask wraps around the secret.
    pub fn div_public(&self, x: &Shared, n: u64) -> Result<Shared> {
        if n == 0 {
            return Err(domain("division by zero"));
        }
        let r = &self.ring;
        let s0 = RingElement(x.shares[0].0 / n);
        let neg1 = r.neg(x.shares[1]);
        let s1 = r.neg(RingElement(neg1.0 / n));
        Ok(Shared { shares: [r.reduce(s0.0), s1] })
    }

    /// `ceil(num / den)` with a secret positive integer divisor `den`,
    /// evaluated by the dealer; neither operand is revealed.
    pub fn div_ceil_secret(&mut self, num: &Shared, den: &Shared) -> Result<Shared> {
        let n = self.peek_signed(num) as i128;
        let d = self.peek_signed(den) as i128;
        if d <= 0 {
            return Err(domain(format!("secret divisor must be positive, got {d}")));
        }
        self.ledger.charge(OpKind::Div);
        let q = n.div_euclid(d) + i128::from(n.rem_euclid(d) != 0);
        let q = self.ring.from_signed(q as i64);
        Ok(self.reshare(q))
    }

    /// Splits each value into its `bits` low-order bits, least significant
    /// first. Values must lie in `0..2^bits`.
    pub fn bit_decompose_vec(&mut self, xs: &SharedVector, bits: u32) -> Result<Vec<SharedVector>> {
        let ring = self.ring;
        let plain = xs.reconstruct(&ring);
        if self.strict {
            if let Some(v) = plain.iter().find(|v| bits < 64 && v.0 >> bits != 0) {
                return Err(domain(format!("value {} does not fit in {bits} bits", v.0)));
            }
        }
        self.ledger.charge_batch(OpKind::BitDec, xs.len() as u64 * u64::from(bits));
        Ok((0..bits).map(|j| plain.iter().map(|v| self.reshare(RingElement((v.0 >> j) & 1))).collect()).collect())
    }
}

fn check_len(a: &SharedVector, b: &SharedVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(protocol(format!("vector length mismatch ({} vs {})", a.len(), b.len())));
    }
    Ok(())
}
