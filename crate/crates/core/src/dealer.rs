//! Trusted dealer for the offline phase: Beaver triples and the secret
//! one-hot mask used to pick the randomized first pivot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::ring::{RingElement, RingParams};
use crate::share::{Shared, SharedVector};

/// Correlated randomness `(a, b, c = a*b)`, shared between the parties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeaverTriple {
    pub id: u64,
    pub a: Shared,
    pub b: Shared,
    pub c: Shared,
}

/// A secret-shared one-hot vector selecting index `(r1 + r2) mod n`.
///
/// `r1` is the server's contribution and `r2` the client's; each party only
/// knows its own contribution, so neither can locate the hot entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotMask {
    pub vector: SharedVector,
    server_contribution: u64,
    client_contribution: u64,
}

impl OneHotMask {
    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    /// Reveals the selected index. Test instrumentation only.
    pub fn selected_index(&self) -> usize {
        selected_index(self.server_contribution, self.client_contribution, self.len())
    }
}

fn selected_index(r1: u64, r2: u64, n: usize) -> usize {
    ((r1 as u128 + r2 as u128) % n as u128) as usize
}

/// In-process dealer with its own seeded randomness.
#[derive(Debug, Clone)]
pub struct Dealer {
    ring: RingParams,
    rng: ChaCha20Rng,
    next_id: u64,
}

impl Dealer {
    pub fn new(ring: RingParams, seed: u64) -> Dealer {
        Dealer { ring, rng: ChaCha20Rng::seed_from_u64(seed), next_id: 0 }
    }

    pub fn ring(&self) -> &RingParams {
        &self.ring
    }

    /// Number of triples handed out so far.
    pub fn issued(&self) -> u64 {
        self.next_id
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn share(&mut self, x: RingElement) -> Shared {
        Shared::new(x, &mut self.rng, &self.ring)
    }

    pub fn triple(&mut self) -> BeaverTriple {
        let ring = self.ring;
        let a = ring.reduce(self.rng.gen());
        let b = ring.reduce(self.rng.gen());
        let c = ring.mul(a, b);
        let id = self.next_id;
        self.next_id += 1;
        BeaverTriple { id, a: self.share(a), b: self.share(b), c: self.share(c) }
    }

    pub fn triples(&mut self, count: usize) -> Vec<BeaverTriple> {
        (0..count).map(|_| self.triple()).collect()
    }

    /// One-hot mask from explicit party contributions.
    pub fn one_hot_from(&mut self, r1: u64, r2: u64, n: usize) -> Result<OneHotMask> {
        if n == 0 {
            return Err(domain("one-hot mask needs n >= 1"));
        }
        let hot = selected_index(r1, r2, n);
        let ring = self.ring;
        let values: Vec<RingElement> = (0..n).map(|i| ring.from_int(i64::from(i == hot))).collect();
        let vector = SharedVector::from_secrets(&values, &mut self.rng, &ring);
        Ok(OneHotMask { vector, server_contribution: r1, client_contribution: r2 })
    }

    /// One-hot mask with fresh contributions for both parties.
    pub fn one_hot(&mut self, n: usize) -> Result<OneHotMask> {
        let r1 = self.rng.gen();
        let r2 = self.rng.gen();
        self.one_hot_from(r1, r2, n)
    }

    /// Offline setup: `count` triples plus a random one-hot mask of length `n`.
    pub fn setup(&mut self, count: usize, n: usize) -> Result<(Vec<BeaverTriple>, OneHotMask)> {
        let mask = self.one_hot(n)?;
        Ok((self.triples(count), mask))
    }
}
