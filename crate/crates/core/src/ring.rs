//! Arithmetic in `Z_{2^ell}` with a two's-complement fixed-point encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An element of `Z_{2^ell}`, stored in the low `ell` bits of a `u64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[repr(transparent)]
pub struct RingElement(pub u64);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }
}

/// Ring width and fixed-point scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingParams {
    ell: u32,
    frac_bits: u32,
}

impl Default for RingParams {
    fn default() -> Self {
        RingParams { ell: 64, frac_bits: 12 }
    }
}

impl RingParams {
    pub const MIN_ELL: u32 = 32;
    pub const MAX_ELL: u32 = 64;

    /// Validates `32 <= ell <= 64` and `2 <= frac_bits < ell - 8`.
    pub fn new(ell: u32, frac_bits: u32) -> Result<Self> {
        if !(Self::MIN_ELL..=Self::MAX_ELL).contains(&ell) {
            return Err(Error::RingParams(format!("ell = {ell} not in {}..={}", Self::MIN_ELL, Self::MAX_ELL)));
        }
        if frac_bits < 2 || frac_bits + 8 >= ell {
            return Err(Error::RingParams(format!(
                "frac_bits = {frac_bits} must satisfy 2 <= f < ell - 8 (ell = {ell})"
            )));
        }
        Ok(RingParams { ell, frac_bits })
    }

    #[inline]
    pub fn ell(&self) -> u32 {
        self.ell
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.ell == 64 {
            u64::MAX
        } else {
            (1u64 << self.ell) - 1
        }
    }

    /// `2^f` as a float.
    #[inline]
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Largest positive signed value, `2^(ell-1) - 1`.
    #[inline]
    pub fn max_signed(&self) -> RingElement {
        RingElement(self.mask() >> 1)
    }

    #[inline]
    pub fn reduce(&self, v: u64) -> RingElement {
        RingElement(v & self.mask())
    }

    #[inline]
    pub fn add(&self, a: RingElement, b: RingElement) -> RingElement {
        self.reduce(a.0.wrapping_add(b.0))
    }

    #[inline]
    pub fn sub(&self, a: RingElement, b: RingElement) -> RingElement {
        self.reduce(a.0.wrapping_sub(b.0))
    }

    #[inline]
    pub fn neg(&self, a: RingElement) -> RingElement {
        self.reduce(a.0.wrapping_neg())
    }

    /// Product modulo `2^ell`; exact because `2^ell` divides `2^64`.
    #[inline]
    pub fn mul(&self, a: RingElement, b: RingElement) -> RingElement {
        self.reduce(a.0.wrapping_mul(b.0))
    }

    /// Two's-complement interpretation.
    #[inline]
    pub fn to_signed(&self, a: RingElement) -> i64 {
        let shift = 64 - self.ell;
        ((a.0 << shift) as i64) >> shift
    }

    #[inline]
    pub fn from_signed(&self, v: i64) -> RingElement {
        self.reduce(v as u64)
    }

    /// Embeds a small integer (not scaled by `2^f`).
    #[inline]
    pub fn from_int(&self, v: i64) -> RingElement {
        self.from_signed(v)
    }

    /// Bound on encodable magnitudes, `2^(ell - f - 1)`.
    pub fn fixed_bound(&self) -> f64 {
        2f64.powi((self.ell - self.frac_bits - 1) as i32)
    }

    /// `round(x * 2^f) mod 2^ell`.
    pub fn encode(&self, x: f64) -> Result<RingElement> {
        let bound = self.fixed_bound();
        if !x.is_finite() || x.abs() >= bound {
            return Err(Error::Range { value: x, bound });
        }
        let scaled = (x * self.scale()).round();
        Ok(self.from_signed(scaled as i64))
    }

    pub fn decode(&self, a: RingElement) -> f64 {
        self.to_signed(a) as f64 / self.scale()
    }

    /// Arithmetic shift right by `f` with round-half-up, on the signed value.
    #[inline]
    pub fn truncate(&self, a: RingElement) -> RingElement {
        let v = self.to_signed(a) as i128;
        let half = 1i128 << (self.frac_bits - 1);
        self.from_signed(((v + half) >> self.frac_bits) as i64)
    }

    /// Signed strict less-than.
    #[inline]
    pub fn lt(&self, a: RingElement, b: RingElement) -> bool {
        self.to_signed(a) < self.to_signed(b)
    }

    /// Fixed-point reciprocal `round(2^(2f) / x)` for positive `x`.
    pub fn fixed_recip(&self, a: RingElement) -> Option<RingElement> {
        let x = self.to_signed(a) as i128;
        if x <= 0 {
            return None;
        }
        let num = 1i128 << (2 * self.frac_bits);
        let q = (num + x / 2) / x;
        Some(self.from_signed(q as i64))
    }
}
