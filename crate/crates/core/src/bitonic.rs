//! Bitonic sorting network over shares: the median baseline.

use crate::error::{domain, Result};
use crate::ledger::StageTag;
use crate::session::Session;
use crate::share::{Shared, SharedVector};

/// Compare-exchanges in a bitonic network on `n` (a power of two) inputs.
pub fn comparator_count(n: usize) -> u64 {
    if n < 2 {
        return 0;
    }
    let log = u64::from(n.trailing_zeros());
    n as u64 * log * (log + 1) / 4
}

/// Sorts ascending. Every compare-exchange costs one comparison and two
/// selections; each network step is one batch. Inputs whose length is not
/// a power of two are padded with the largest signed value.
pub fn bitonic_sort(session: &mut Session, values: &SharedVector) -> Result<SharedVector> {
    let n = values.len();
    let size = n.max(1).next_power_of_two();
    let mut v = values.clone();
    let sentinel = Shared::public(session.ring().max_signed());
    while v.len() < size {
        v.push(sentinel);
    }
    let mut k = 2;
    while k <= size {
        let mut j = k / 2;
        while j > 0 {
            let pairs: Vec<(usize, usize)> = (0..size).filter_map(|i| ((i ^ j) > i).then_some((i, i ^ j))).collect();
            let mut p = SharedVector::default();
            let mut q = SharedVector::default();
            let mut x = SharedVector::default();
            let mut y = SharedVector::default();
            for &(i, l) in &pairs {
                let (xi, yl) = (v.get(i), v.get(l));
                x.push(xi);
                y.push(yl);
                // ascending blocks swap when y < x, descending ones when x < y
                if i & k == 0 {
                    p.push(yl);
                    q.push(xi);
                } else {
                    p.push(xi);
                    q.push(yl);
                }
            }
            let swap = session.cmp_vec(&p, &q)?;
            let lo = session.mux_vec(&swap, &y, &x)?;
            let hi = session.mux_vec(&swap, &x, &y)?;
            for (t, &(i, l)) in pairs.iter().enumerate() {
                v.set(i, lo.get(t));
                v.set(l, hi.get(t));
            }
            j /= 2;
        }
        k *= 2;
    }
    Ok(v.slice(0, n))
}

/// Rank-`n/2` smallest element (index `n/2 - 1` of the sorted order).
pub fn bitonic_median(session: &mut Session, values: &SharedVector) -> Result<Shared> {
    if values.len() < 2 {
        return Err(domain("median selection needs at least two elements"));
    }
    let prev = session.set_stage(StageTag::Bitonic);
    let sorted = bitonic_sort(session, values);
    session.set_stage(prev);
    Ok(sorted?.get(values.len() / 2 - 1))
}
