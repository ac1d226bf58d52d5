//! 2-of-2 additive secret sharing over `Z_{2^ell}`.
//!
//! Both logical parties live in one process. [`Shared`] and [`SharedVector`]
//! hold the two parties' shares side by side; the per-party view of a single
//! share is [`AdditiveShare`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{protocol, Result};
use crate::ring::{RingElement, RingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    /// Model owner.
    Server = 0,
    /// Input owner.
    Client = 1,
}

impl Party {
    pub const BOTH: [Party; 2] = [Party::Server, Party::Client];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// One party's share of a secret.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdditiveShare {
    pub party: Party,
    pub value: RingElement,
}

impl AdditiveShare {
    /// Local addition of two shares held by the same party.
    pub fn add_local(&self, other: &AdditiveShare, ring: &RingParams) -> Result<AdditiveShare> {
        if self.party != other.party {
            return Err(protocol(format!("cannot add a {:?} share to a {:?} share", self.party, other.party)));
        }
        Ok(AdditiveShare { party: self.party, value: ring.add(self.value, other.value) })
    }
}

/// Reconstructs a secret from one share per party.
pub fn reconstruct(a: &AdditiveShare, b: &AdditiveShare, ring: &RingParams) -> Result<RingElement> {
    if a.party == b.party {
        return Err(protocol("reconstruction needs one share from each party"));
    }
    Ok(ring.add(a.value, b.value))
}

/// Splits `x` into `(r, x - r)` for an explicit mask `r`.
pub fn share_with_mask(x: RingElement, r: RingElement, ring: &RingParams) -> (AdditiveShare, AdditiveShare) {
    let r = ring.reduce(r.0);
    (AdditiveShare { party: Party::Server, value: r }, AdditiveShare { party: Party::Client, value: ring.sub(x, r) })
}

/// Splits `x` with a uniform mask drawn from `rng`.
pub fn share<R: Rng + ?Sized>(x: RingElement, rng: &mut R, ring: &RingParams) -> (AdditiveShare, AdditiveShare) {
    share_with_mask(x, RingElement(rng.gen()), ring)
}

/// Both parties' shares of one secret value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Shared {
    pub shares: [RingElement; 2],
}

impl Shared {
    pub fn new<R: Rng + ?Sized>(x: RingElement, rng: &mut R, ring: &RingParams) -> Shared {
        let r = ring.reduce(rng.gen());
        Shared { shares: [r, ring.sub(x, r)] }
    }

    /// Sharing of a public constant: the server holds it, the client holds zero.
    pub fn public(x: RingElement) -> Shared {
        Shared { shares: [x, RingElement::ZERO] }
    }

    pub fn from_parts(a: AdditiveShare, b: AdditiveShare) -> Result<Shared> {
        if a.party == b.party {
            return Err(protocol("a shared value needs one share from each party"));
        }
        let mut shares = [RingElement::ZERO; 2];
        shares[a.party.index()] = a.value;
        shares[b.party.index()] = b.value;
        Ok(Shared { shares })
    }

    pub fn share_of(&self, party: Party) -> AdditiveShare {
        AdditiveShare { party, value: self.shares[party.index()] }
    }

    #[inline]
    pub fn reconstruct(&self, ring: &RingParams) -> RingElement {
        ring.add(self.shares[0], self.shares[1])
    }

    #[inline]
    pub fn add(&self, other: &Shared, ring: &RingParams) -> Shared {
        Shared { shares: [ring.add(self.shares[0], other.shares[0]), ring.add(self.shares[1], other.shares[1])] }
    }

    #[inline]
    pub fn sub(&self, other: &Shared, ring: &RingParams) -> Shared {
        Shared { shares: [ring.sub(self.shares[0], other.shares[0]), ring.sub(self.shares[1], other.shares[1])] }
    }

    #[inline]
    pub fn neg(&self, ring: &RingParams) -> Shared {
        Shared { shares: [ring.neg(self.shares[0]), ring.neg(self.shares[1])] }
    }

    /// Adds a public constant (server side only).
    #[inline]
    pub fn add_public(&self, c: RingElement, ring: &RingParams) -> Shared {
        Shared { shares: [ring.add(self.shares[0], c), self.shares[1]] }
    }

    /// Multiplies by a public constant; no truncation.
    #[inline]
    pub fn scale_public(&self, c: RingElement, ring: &RingParams) -> Shared {
        Shared { shares: [ring.mul(self.shares[0], c), ring.mul(self.shares[1], c)] }
    }
}

/// Both parties' shares of a vector.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SharedVector {
    shares: [Vec<RingElement>; 2],
}

impl SharedVector {
    pub fn from_secrets<R: Rng + ?Sized>(values: &[RingElement], rng: &mut R, ring: &RingParams) -> SharedVector {
        values.iter().map(|&v| Shared::new(v, rng, ring)).collect()
    }

    pub fn encode_reals<R: Rng + ?Sized>(values: &[f64], rng: &mut R, ring: &RingParams) -> Result<SharedVector> {
        let encoded = values.iter().map(|&x| ring.encode(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_secrets(&encoded, rng, ring))
    }

    pub fn public(values: &[RingElement]) -> SharedVector {
        SharedVector { shares: [values.to_vec(), vec![RingElement::ZERO; values.len()]] }
    }

    pub fn from_party_vectors(server: Vec<RingElement>, client: Vec<RingElement>) -> Result<Self> {
        if server.len() != client.len() {
            return Err(protocol(format!("party vectors differ in length ({} vs {})", server.len(), client.len())));
        }
        Ok(SharedVector { shares: [server, client] })
    }

    pub fn with_len(len: usize) -> SharedVector {
        SharedVector { shares: [vec![RingElement::ZERO; len], vec![RingElement::ZERO; len]] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.shares[0].len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.shares[0].is_empty()
    }

    pub fn party(&self, party: Party) -> &[RingElement] {
        &self.shares[party.index()]
    }

    #[inline]
    pub fn get(&self, i: usize) -> Shared {
        Shared { shares: [self.shares[0][i], self.shares[1][i]] }
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: Shared) {
        self.shares[0][i] = v.shares[0];
        self.shares[1][i] = v.shares[1];
    }

    pub fn push(&mut self, v: Shared) {
        self.shares[0].push(v.shares[0]);
        self.shares[1].push(v.shares[1]);
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Shared> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn slice(&self, start: usize, end: usize) -> SharedVector {
        SharedVector { shares: [self.shares[0][start..end].to_vec(), self.shares[1][start..end].to_vec()] }
    }

    pub fn extend_from(&mut self, other: &SharedVector) {
        self.shares[0].extend_from_slice(&other.shares[0]);
        self.shares[1].extend_from_slice(&other.shares[1]);
    }

    pub fn reconstruct(&self, ring: &RingParams) -> Vec<RingElement> {
        self.shares[0].iter().zip(&self.shares[1]).map(|(&a, &b)| ring.add(a, b)).collect()
    }

    pub fn decode(&self, ring: &RingParams) -> Vec<f64> {
        self.reconstruct(ring).into_iter().map(|v| ring.decode(v)).collect()
    }

    fn check_len(&self, other: &SharedVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(protocol(format!("vector length mismatch ({} vs {})", self.len(), other.len())));
        }
        Ok(())
    }

    /// Element-wise local addition.
    pub fn add(&self, other: &SharedVector, ring: &RingParams) -> Result<SharedVector> {
        self.check_len(other)?;
        Ok(self.iter().zip(other.iter()).map(|(a, b)| a.add(&b, ring)).collect())
    }

    pub fn sub(&self, other: &SharedVector, ring: &RingParams) -> Result<SharedVector> {
        self.check_len(other)?;
        Ok(self.iter().zip(other.iter()).map(|(a, b)| a.sub(&b, ring)).collect())
    }

    /// Local sum of all entries.
    pub fn sum(&self, ring: &RingParams) -> Shared {
        self.iter().fold(Shared::default(), |acc, v| acc.add(&v, ring))
    }
}

impl FromIterator<Shared> for SharedVector {
    fn from_iter<I: IntoIterator<Item = Shared>>(iter: I) -> Self {
        let mut out = SharedVector::default();
        for v in iter {
            out.push(v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn share_examples() {
        let ring = RingParams::default();
        let (a, b) = share_with_mask(RingElement(12), RingElement(5), &ring);
        assert_eq!((a.value.0, b.value.0), (5, 7));
        let (a, b) = share_with_mask(RingElement(0), RingElement(0), &ring);
        assert_eq!((a.value.0, b.value.0), (0, 0));
    }

    #[test]
    fn add_local_examples() {
        let ring = RingParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (x0, x1) = share(RingElement(3), &mut rng, &ring);
        let (y0, y1) = share(RingElement(4), &mut rng, &ring);
        let z0 = x0.add_local(&y0, &ring).unwrap();
        let z1 = x1.add_local(&y1, &ring).unwrap();
        assert_eq!(reconstruct(&z0, &z1, &ring).unwrap(), RingElement(7));

        let x = ring.from_signed(-91);
        let (n0, n1) = share(ring.neg(x), &mut rng, &ring);
        let (p0, p1) = share(x, &mut rng, &ring);
        let s0 = n0.add_local(&p0, &ring).unwrap();
        let s1 = n1.add_local(&p1, &ring).unwrap();
        assert_eq!(reconstruct(&s0, &s1, &ring).unwrap(), RingElement(0));
    }

    #[test]
    fn add_local_party_mismatch() {
        let ring = RingParams::default();
        let a = AdditiveShare { party: Party::Server, value: RingElement(1) };
        let b = AdditiveShare { party: Party::Client, value: RingElement(1) };
        assert!(matches!(a.add_local(&b, &ring), Err(crate::Error::Protocol(_))));
        assert!(reconstruct(&a, &a, &ring).is_err());
    }

    #[test]
    fn vector_add_matches_plaintext() {
        let ring = RingParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let xs: Vec<RingElement> = (0..256).map(|_| RingElement(rng.gen())).collect();
        let ys: Vec<RingElement> = (0..256).map(|_| RingElement(rng.gen())).collect();
        let sx = SharedVector::from_secrets(&xs, &mut rng, &ring);
        let sy = SharedVector::from_secrets(&ys, &mut rng, &ring);
        let sum = sx.add(&sy, &ring).unwrap().reconstruct(&ring);
        for i in 0..256 {
            assert_eq!(sum[i].0, xs[i].0.wrapping_add(ys[i].0));
        }
        assert!(sx.add(&sx.slice(0, 10), &ring).is_err());
    }

    #[test]
    fn narrow_ring_shares_stay_in_range() {
        let ring = RingParams::new(32, 12).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let x = ring.reduce(rng.gen());
            let s = Shared::new(x, &mut rng, &ring);
            assert!(s.shares.iter().all(|v| v.0 < (1u64 << 32)));
            assert_eq!(s.reconstruct(&ring), x);
        }
    }
}
