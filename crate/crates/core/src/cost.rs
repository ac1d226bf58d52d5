//! Per-primitive cost table and network profiles.
//!
//! Primitives run as dealer-assisted ideal functionalities, so their real
//! communication never happens; what they *would* cost is looked up here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::RingParams;

/// Modeled cost of one primitive invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpCost {
    /// Rounds per invocation (or per batch, for vectorized calls).
    pub rounds: u64,
    pub bytes: u64,
    pub compute_s: f64,
}

impl OpCost {
    pub const FREE: OpCost = OpCost { rounds: 0, bytes: 0, compute_s: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Cmp,
    Mux,
    Mul,
    Recip,
    Div,
    Trunc,
    Open,
    BitDec,
}

impl OpKind {
    pub const ALL: [OpKind; 8] = [
        OpKind::Cmp,
        OpKind::Mux,
        OpKind::Mul,
        OpKind::Recip,
        OpKind::Div,
        OpKind::Trunc,
        OpKind::Open,
        OpKind::BitDec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Cmp => "cmp",
            OpKind::Mux => "mux",
            OpKind::Mul => "mul",
            OpKind::Recip => "recip",
            OpKind::Div => "div",
            OpKind::Trunc => "trunc",
            OpKind::Open => "open",
            OpKind::BitDec => "bitdec",
        }
    }

    pub fn parse(s: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Cost of every primitive, plus how many multiplications a reciprocal or
/// secret division is worth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub cmp: OpCost,
    pub mux: OpCost,
    pub mul: OpCost,
    pub trunc: OpCost,
    pub open: OpCost,
    pub bitdec: OpCost,
    /// Rounds charged per reciprocal.
    pub recip_rounds: u64,
    /// Multiplications charged per reciprocal.
    pub recip_muls: u64,
    /// Multiplications charged per secret-divisor division, on top of one reciprocal.
    pub div_extra_muls: u64,
}

/// Multiplier on `ell` for the byte cost of one comparison.
pub const DEFAULT_LAMBDA_FACTOR: u64 = 16;

impl CostTable {
    /// Defaults scaled to the ring width.
    pub fn for_ring(ring: &RingParams) -> CostTable {
        let ell = u64::from(ring.ell());
        let log_ell = u64::from(ell.next_power_of_two().trailing_zeros());
        let cmp = OpCost { rounds: log_ell, bytes: ell * DEFAULT_LAMBDA_FACTOR, compute_s: 2e-6 };
        CostTable {
            cmp,
            mux: OpCost { rounds: 1, bytes: 2 * ell, compute_s: 2e-7 },
            // two openings (d, e), each party sends ell bits for each
            mul: OpCost { rounds: 1, bytes: 4 * ell / 8, compute_s: 1e-7 },
            // local truncation of the product shares
            trunc: OpCost::FREE,
            open: OpCost { rounds: 1, bytes: 2 * ell / 8, compute_s: 0.0 },
            bitdec: cmp,
            recip_rounds: 3,
            recip_muls: 3,
            div_extra_muls: 1,
        }
    }

    pub fn get(&self, kind: OpKind) -> OpCost {
        match kind {
            OpKind::Cmp => self.cmp,
            OpKind::Mux => self.mux,
            OpKind::Mul => self.mul,
            OpKind::Trunc => self.trunc,
            OpKind::Open => self.open,
            OpKind::BitDec => self.bitdec,
            OpKind::Recip => OpCost {
                rounds: self.recip_rounds,
                bytes: self.recip_muls * self.mul.bytes,
                compute_s: self.recip_muls as f64 * self.mul.compute_s,
            },
            OpKind::Div => {
                let muls = self.recip_muls + self.div_extra_muls;
                OpCost {
                    rounds: self.recip_rounds + self.div_extra_muls,
                    bytes: muls * self.mul.bytes,
                    compute_s: muls as f64 * self.mul.compute_s,
                }
            }
        }
    }

    fn slot(&mut self, kind: OpKind) -> Option<&mut OpCost> {
        match kind {
            OpKind::Cmp => Some(&mut self.cmp),
            OpKind::Mux => Some(&mut self.mux),
            OpKind::Mul => Some(&mut self.mul),
            OpKind::Trunc => Some(&mut self.trunc),
            OpKind::Open => Some(&mut self.open),
            OpKind::BitDec => Some(&mut self.bitdec),
            OpKind::Recip | OpKind::Div => None,
        }
    }

    /// Applies one `cost.<op>.<field> = value` override. `key` is given
    /// without the `cost.` prefix.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("invalid cost value for {key}: {value:?}"));
        let parse_u64 = || value.trim().parse::<u64>().map_err(|_| bad());
        match key {
            "recip.rounds" => self.recip_rounds = parse_u64()?,
            "recip.muls" => self.recip_muls = parse_u64()?,
            "div.extra_muls" => self.div_extra_muls = parse_u64()?,
            _ => {
                let (op, field) =
                    key.split_once('.').ok_or_else(|| Error::Config(format!("unknown cost key {key}")))?;
                let slot = OpKind::parse(op)
                    .and_then(|k| self.slot(k))
                    .ok_or_else(|| Error::Config(format!("unknown cost key {key}")))?;
                match field {
                    "rounds" => slot.rounds = parse_u64()?,
                    "bytes" => slot.bytes = parse_u64()?,
                    "compute_s" => {
                        let v = value.trim().parse::<f64>().map_err(|_| bad())?;
                        if !(v.is_finite() && v >= 0.0) {
                            return Err(bad());
                        }
                        slot.compute_s = v;
                    }
                    _ => return Err(Error::Config(format!("unknown cost key {key}"))),
                }
            }
        }
        Ok(())
    }
}

/// Link model: `time = compute + rounds * latency + bits / bandwidth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetProfile {
    pub name: String,
    /// Bits per second.
    pub bandwidth: f64,
    /// One-way latency in seconds, charged once per round.
    pub latency: f64,
}

impl NetProfile {
    pub fn new(name: impl Into<String>, bandwidth: f64, latency: f64) -> Result<NetProfile> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!("bandwidth must be > 0, got {bandwidth}")));
        }
        if !(latency.is_finite() && latency >= 0.0) {
            return Err(Error::Config(format!("latency must be >= 0, got {latency}")));
        }
        Ok(NetProfile { name: name.into(), bandwidth, latency })
    }

    pub fn lan() -> NetProfile {
        NetProfile { name: "lan".into(), bandwidth: 3e9, latency: 0.8e-3 }
    }

    pub fn wan() -> NetProfile {
        NetProfile { name: "wan".into(), bandwidth: 200e6, latency: 50e-3 }
    }

    pub fn mobile() -> NetProfile {
        NetProfile { name: "mobile".into(), bandwidth: 100e6, latency: 80e-3 }
    }

    pub fn presets() -> [NetProfile; 3] {
        [Self::lan(), Self::wan(), Self::mobile()]
    }

    pub fn by_name(name: &str) -> Option<NetProfile> {
        Self::presets().into_iter().find(|p| p.name == name)
    }

    pub fn time(&self, compute_s: f64, rounds: f64, bytes: f64) -> f64 {
        compute_s + rounds * self.latency + bytes * 8.0 / self.bandwidth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_ring_width() {
        let t = CostTable::for_ring(&RingParams::default());
        assert_eq!(t.cmp.rounds, 6);
        assert_eq!(t.cmp.bytes, 64 * 16);
        assert_eq!(t.mux.bytes, 128);
        assert_eq!(t.mux.rounds, 1);
        assert_eq!(t.mul.bytes, 32);
        let r = t.get(OpKind::Recip);
        assert_eq!((r.rounds, r.bytes), (3, 96));

        let t37 = CostTable::for_ring(&RingParams::new(37, 12).unwrap());
        assert_eq!(t37.cmp.rounds, 6);
        let t32 = CostTable::for_ring(&RingParams::new(32, 12).unwrap());
        assert_eq!(t32.cmp.rounds, 5);
    }

    #[test]
    fn overrides() {
        let mut t = CostTable::for_ring(&RingParams::default());
        t.set("cmp.rounds", "4").unwrap();
        t.set("mux.bytes", "16").unwrap();
        t.set("recip.muls", "5").unwrap();
        t.set("mul.compute_s", "1e-6").unwrap();
        assert_eq!(t.cmp.rounds, 4);
        assert_eq!(t.mux.bytes, 16);
        assert_eq!(t.get(OpKind::Recip).bytes, 5 * 32);
        assert!(t.set("cmp.speed", "1").is_err());
        assert!(t.set("foo.rounds", "1").is_err());
        assert!(t.set("cmp.rounds", "-1").is_err());
        assert!(t.set("mul.compute_s", "NaN").is_err());
    }

    #[test]
    fn net_profiles() {
        assert!(NetProfile::new("x", 0.0, 0.1).is_err());
        assert!(NetProfile::new("x", 1.0, -0.1).is_err());
        let wan = NetProfile::by_name("wan").unwrap();
        // 25 MB at 200 Mbit/s is one second, plus two rounds at 50 ms
        assert!((wan.time(0.0, 2.0, 25e6) - 1.1).abs() < 1e-12);
    }
}
