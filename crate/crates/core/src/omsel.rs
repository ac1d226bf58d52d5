//! Oblivious median selection (OMSel).
//!
//! Elements are never moved. Each round compares every element against a
//! shared pivot and narrows a secret alive mask to the side that holds the
//! target rank. Only one bit per round is opened: whether a single element
//! is left alive.
//!
//! To make all values distinct, selection runs on keys
//! `score * 2^b + (n - 1 - i)` with `b = ceil(log2 n)`. Equal scores are
//! thereby ordered with lower indices ranked higher, and the median key
//! maps back to the median score by a shift.

use serde::{Deserialize, Serialize};

use crate::bitonic::bitonic_sort;
use crate::dealer::OneHotMask;
use crate::error::{domain, protocol, Result};
use crate::ledger::StageTag;
use crate::ring::RingElement;
use crate::session::{Session, SharedBit};
use crate::share::{Shared, SharedVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OmselConfig {
    /// Round limit before falling back to the sorting network. `None` uses
    /// `4 * ceil(log2 n) + 8`.
    pub max_rounds: Option<u32>,
    /// Divide the masked sum by the public length `n` instead of the secret
    /// alive count when forming the average pivot.
    pub constant_n_division: bool,
}

impl OmselConfig {
    pub fn round_limit(&self, n: usize) -> u32 {
        self.max_rounds.unwrap_or_else(|| 4 * tie_bits(n) + 8)
    }
}

/// Secret state carried between rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotState {
    /// Rounds completed so far.
    pub round: u32,
    pub alive: SharedVector,
    pub alive_count: Shared,
    /// Rank of the target within the alive set, 1-based. Starts at `n/2`.
    pub target_rank: Shared,
    pub pivot: Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OmselOutcome {
    pub median: Shared,
    /// The median's tie-broken key.
    pub median_key: Shared,
    /// Revealed round count.
    pub rounds: u32,
    pub fell_back: bool,
}

/// `ceil(log2 n)`: bits reserved for the index tie-breaker.
pub fn tie_bits(n: usize) -> u32 {
    n.max(1).next_power_of_two().trailing_zeros()
}

/// Distinct keys `score * 2^b + (n - 1 - i)`, computed locally.
pub fn tie_break_keys(session: &Session, scores: &SharedVector) -> SharedVector {
    let ring = *session.ring();
    let n = scores.len();
    let scale = RingElement(1u64 << tie_bits(n));
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| s.scale_public(scale, &ring).add_public(RingElement((n - 1 - i) as u64), &ring))
        .collect()
}

/// The element selected by the dealer's secret one-hot mask, via one inner
/// product (`n` multiplications).
pub fn rdm_first_pivot(session: &mut Session, scores: &SharedVector, mask: &OneHotMask) -> Result<Shared> {
    if mask.len() != scores.len() {
        return Err(protocol(format!("one-hot mask has length {} but there are {} scores", mask.len(), scores.len())));
    }
    let picked = session.mul_ring_vec(&mask.vector, scores)?;
    Ok(picked.sum(session.ring()))
}

fn ring_one() -> RingElement {
    RingElement(1)
}

/// Average of the alive keys, rounded up, with the count kept secret.
pub fn avg_pivot(session: &mut Session, state: &PivotState, keys: &SharedVector, constant_n: bool) -> Result<Shared> {
    let masked = session.mul_ring_vec(&state.alive, keys)?;
    let sum = masked.sum(session.ring());
    if constant_n {
        return session.div_public(&sum, keys.len() as u64);
    }
    if session.peek_signed(&state.alive_count) < 1 {
        return Err(protocol("average pivot over an empty alive set"));
    }
    session.div_ceil_secret(&sum, &state.alive_count)
}

/// One pseudo-partitioning round. Touches every index with exactly one
/// comparison and one selection regardless of the alive mask.
pub fn omsel_round(session: &mut Session, state: &PivotState, keys: &SharedVector) -> Result<PivotState> {
    let ring = *session.ring();
    let n = keys.len();
    let below = session.cmp_vec_scalar(keys, &state.pivot);
    let alive_below = session.mul_ring_vec(&state.alive, &below)?;
    let alive_above = state.alive.sub(&alive_below, &ring)?;
    let below_count = alive_below.sum(&ring);

    // target stays on the lower side iff k <= below_count
    let lower = session.cmp(&below_count, &state.target_rank).not(&ring);
    let selector: SharedVector = std::iter::repeat_n(lower.value(), n).collect();
    let alive = session.mux_vec(&selector, &alive_below, &alive_above)?;
    let target_rank = session.mux(&lower, &state.target_rank, &state.target_rank.sub(&below_count, &ring))?;
    let alive_count = session.mux(&lower, &below_count, &state.alive_count.sub(&below_count, &ring))?;

    Ok(PivotState { round: state.round + 1, alive, alive_count, target_rank, pivot: state.pivot })
}

/// Secure "exactly one alive" test; only this bit is opened.
fn done_bit(session: &mut Session, state: &PivotState) -> bool {
    let two = Shared::public(session.ring().from_int(2));
    let done: SharedBit = session.cmp(&state.alive_count, &two);
    session.open(&done.value()).0 == 1
}

/// Rank-`n/2` smallest score with a dealer-supplied one-hot mask.
pub fn omsel_with_mask(
    session: &mut Session,
    scores: &SharedVector,
    mask: &OneHotMask,
    config: &OmselConfig,
) -> Result<OmselOutcome> {
    omsel_observed(session, scores, mask, config, |_, _, _| {})
}

/// Rank-`n/2` smallest score, drawing the first-pivot mask from the dealer.
pub fn omsel(session: &mut Session, scores: &SharedVector, config: &OmselConfig) -> Result<OmselOutcome> {
    let mask = session.dealer_mut().one_hot(scores.len())?;
    omsel_with_mask(session, scores, &mask, config)
}

/// As [`omsel_with_mask`], calling `observe` after every round with the
/// session, the new state and the keys. Meant for test instrumentation.
pub fn omsel_observed<F>(
    session: &mut Session,
    scores: &SharedVector,
    mask: &OneHotMask,
    config: &OmselConfig,
    mut observe: F,
) -> Result<OmselOutcome>
where
    F: FnMut(&Session, &PivotState, &SharedVector),
{
    let n = scores.len();
    if n < 2 || n % 2 != 0 {
        return Err(domain(format!("median selection needs an even length >= 2, got {n}")));
    }
    let ring = *session.ring();
    let prev_stage = session.set_stage(StageTag::Omsel);
    let keys = tie_break_keys(session, scores);
    let limit = config.round_limit(n);

    session.set_trace_round(Some(1));
    let pivot = rdm_first_pivot(session, &keys, mask)?;
    let mut state = PivotState {
        round: 0,
        alive: SharedVector::public(&vec![ring_one(); n]),
        alive_count: Shared::public(ring.from_int(n as i64)),
        target_rank: Shared::public(ring.from_int((n / 2) as i64)),
        pivot,
    };

    let mut finished = false;
    while state.round < limit {
        if state.round > 0 {
            session.set_trace_round(Some(state.round + 1));
            state.pivot = avg_pivot(session, &state, &keys, config.constant_n_division)?;
        }
        state = omsel_round(session, &state, &keys)?;
        observe(session, &state, &keys);
        if done_bit(session, &state) {
            finished = true;
            break;
        }
    }
    session.set_trace_round(None);

    let (median_key, fell_back) = if finished {
        let masked = session.mul_ring_vec(&state.alive, &keys)?;
        (masked.sum(&ring), false)
    } else {
        session.set_stage(StageTag::Bitonic);
        let sorted = bitonic_sort(session, &keys)?;
        session.set_stage(StageTag::Omsel);
        (sorted.get(n / 2 - 1), true)
    };
    let median = session.shift_right(&median_key, tie_bits(n));
    session.set_stage(prev_stage);
    Ok(OmselOutcome { median, median_key, rounds: state.round, fell_back })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::RingParams;
    use crate::trace::{verify_full_coverage, TraceOp};

    fn session(seed: u64) -> Session {
        Session::new(RingParams::default(), seed)
    }

    #[test]
    fn first_pivot_examples() {
        let mut s = session(1);
        let r = *s.ring();
        let v = s.share_vec(&[r.from_int(10), r.from_int(20), r.from_int(30), r.from_int(40)]);
        let mask = s.dealer_mut().one_hot_from(1, 1, 4).unwrap();
        let p = rdm_first_pivot(&mut s, &v, &mask).unwrap();
        assert_eq!(s.peek_signed(&p), 30);
        assert_eq!(s.ledger().total().mul, 4);

        let one = s.share_vec(&[r.from_int(-7)]);
        let mask = s.dealer_mut().one_hot(1).unwrap();
        let p = rdm_first_pivot(&mut s, &one, &mask).unwrap();
        assert_eq!(s.peek_signed(&p), -7);
        assert!(rdm_first_pivot(&mut s, &v, &mask).is_err());
    }

    fn all_alive(s: &mut Session, n: usize, k: i64, pivot: i64) -> PivotState {
        let r = *s.ring();
        PivotState {
            round: 0,
            alive: SharedVector::public(&vec![RingElement(1); n]),
            alive_count: Shared::public(r.from_int(n as i64)),
            target_rank: Shared::public(r.from_int(k)),
            pivot: s.share(r.from_int(pivot)),
        }
    }

    #[test]
    fn round_examples() {
        let mut s = session(2);
        let r = *s.ring();
        let keys = s.share_vec(&(1..=5).map(|v| r.from_int(v)).collect::<Vec<_>>());
        let st = all_alive(&mut s, 5, 3, 3);
        let next = omsel_round(&mut s, &st, &keys).unwrap();
        // below {1, 2} holds only two elements, so rank 3 is on the upper side
        let alive: Vec<u64> = next.alive.reconstruct(&r).iter().map(|v| v.0).collect();
        assert_eq!(alive, vec![0, 0, 1, 1, 1]);
        assert_eq!(s.peek_signed(&next.target_rank), 1);
        assert_eq!(s.peek_signed(&next.alive_count), 3);
        let t = s.ledger().total();
        assert_eq!((t.cmp, t.mux), (5 + 1, 5 + 2));

        let st = all_alive(&mut s, 5, 3, 0);
        let next = omsel_round(&mut s, &st, &keys).unwrap();
        assert_eq!(s.peek_signed(&next.alive_count), 5);
        assert_eq!(s.peek_signed(&next.target_rank), 3);
    }

    #[test]
    fn avg_pivot_examples() {
        let mut s = session(3);
        let r = *s.ring();
        let keys = s.share_vec(&(1..=5).map(|v| r.from_int(v)).collect::<Vec<_>>());
        let st = all_alive(&mut s, 5, 3, 0);
        let p = avg_pivot(&mut s, &st, &keys, false).unwrap();
        assert_eq!(s.peek_signed(&p), 3);
        let mut st2 = st.clone();
        st2.alive = s.share_vec(&[0, 1, 0, 1, 0].map(RingElement));
        st2.alive_count = s.share(r.from_int(2));
        let p = avg_pivot(&mut s, &st2, &keys, false).unwrap();
        assert_eq!(s.peek_signed(&p), 3);
        st2.alive = s.share_vec(&[0, 1, 1, 0, 0].map(RingElement));
        let p = avg_pivot(&mut s, &st2, &keys, false).unwrap();
        // mean 2.5 rounds up
        assert_eq!(s.peek_signed(&p), 3);
        st2.alive_count = s.share(RingElement::ZERO);
        assert!(avg_pivot(&mut s, &st2, &keys, false).is_err());
    }

    #[test]
    fn median_examples() {
        let mut s = session(4);
        let v = s.share_reals(&[0.9, 0.1, 0.5, 0.7, 0.3, 0.8, 0.2, 0.6]).unwrap();
        let out = omsel(&mut s, &v, &OmselConfig::default()).unwrap();
        assert_eq!(s.peek_real(&out.median), 0.5);
        assert!(!out.fell_back);
        let t = s.ledger().total();
        assert_eq!(t.cmp, t.mux);
        assert_eq!(t.cmp, u64::from(out.rounds) * (8 + 2));
        assert_eq!(t.open, u64::from(out.rounds));

        let v = s.share_reals(&[2.5, -1.25]).unwrap();
        let out = omsel(&mut s, &v, &OmselConfig::default()).unwrap();
        assert_eq!(s.peek_real(&out.median), -1.25);
        let odd = s.share_reals(&[1.0, 2.0, 3.0]).unwrap();
        assert!(omsel(&mut s, &odd, &OmselConfig::default()).is_err());
    }

    #[test]
    fn ties_resolve_by_index() {
        let mut s = session(5);
        let v = s.share_reals(&[1.0; 6]).unwrap();
        let out = omsel(&mut s, &v, &OmselConfig::default()).unwrap();
        assert_eq!(s.peek_real(&out.median), 1.0);
        // rank 3 of keys 5,4,3,2,1,0 is key 2, i.e. index 3
        let key = s.peek_signed(&out.median_key);
        assert_eq!(key & 7, 2);
    }

    #[test]
    fn fallback_when_round_limit_hits() {
        let mut s = session(6);
        let v = s.share_reals(&[3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0]).unwrap();
        let cfg = OmselConfig { max_rounds: Some(1), constant_n_division: false };
        let out = omsel(&mut s, &v, &cfg).unwrap();
        assert_eq!(s.peek_real(&out.median), 3.0);
        if out.fell_back {
            assert!(s.ledger().stage_tally(StageTag::Bitonic).cmp > 0);
        }
        let cfg = OmselConfig { max_rounds: Some(0), constant_n_division: false };
        let out = omsel(&mut s, &v, &cfg).unwrap();
        assert!(out.fell_back);
        assert_eq!(s.peek_real(&out.median), 3.0);
    }

    #[test]
    fn constant_n_division_stays_correct() {
        let mut s = session(7);
        let vals: Vec<f64> = (0..16).map(|i| ((i * 5) % 16) as f64 - 3.0).collect();
        let v = s.share_reals(&vals).unwrap();
        let cfg = OmselConfig { max_rounds: None, constant_n_division: true };
        let out = omsel(&mut s, &v, &cfg).unwrap();
        assert_eq!(s.peek_real(&out.median), 4.0);
    }

    #[test]
    fn trace_covers_every_index() {
        let mut s = session(8);
        s.enable_trace();
        let vals: Vec<f64> = (0..16).map(|i| ((i * 7) % 16) as f64 * 0.25).collect();
        let v = s.share_reals(&vals).unwrap();
        let out = omsel(&mut s, &v, &OmselConfig::default()).unwrap();
        let trace = s.take_trace().unwrap();
        assert_eq!(trace.rounds(), out.rounds);
        verify_full_coverage(&trace, 16).unwrap();
        assert_eq!(trace.count(TraceOp::Cmp, true), 16 * out.rounds as usize);
    }
}
