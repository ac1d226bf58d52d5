use proptest::prelude::*;
use tokendrop_core::bitonic::bitonic_sort;
use tokendrop_core::drop::{oblivious_compact_scheduled, replay_compaction};
use tokendrop_core::mcn::{mcn_row, secure_row_max};
use tokendrop_core::omsel::{omsel, OmselConfig};
use tokendrop_core::oracle::{sort_median_i64, stable_filter};
use tokendrop_core::{CompactionNetwork, RingElement, RingParams, Session, SharedVector};

fn ring() -> RingParams {
    RingParams::new(64, 12).unwrap()
}

fn pow2_vec() -> impl Strategy<Value = Vec<i64>> {
    (2u32..=6).prop_flat_map(|k| proptest::collection::vec(-5_000i64..5_000, 1usize << k))
}

fn share_ints(s: &mut Session, v: &[i64]) -> SharedVector {
    let r = *s.ring();
    let xs: Vec<RingElement> = v.iter().map(|&x| r.from_signed(x)).collect();
    s.share_vec(&xs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shares_are_additively_homomorphic(a in any::<i64>(), b in any::<i64>(), seed in any::<u64>()) {
        let r = ring();
        let mut s = Session::new(r, seed);
        let x = s.share(r.from_signed(a));
        let y = s.share(r.from_signed(b));
        prop_assert_eq!(r.to_signed(x.add(&y, &r).reconstruct(&r)), a.wrapping_add(b));
        prop_assert_eq!(r.to_signed(x.sub(&y, &r).reconstruct(&r)), a.wrapping_sub(b));
    }

    #[test]
    fn fixed_point_roundtrip(x in -1.0e6f64..1.0e6) {
        let r = ring();
        let back = r.decode(r.encode(x).unwrap());
        prop_assert!((back - x).abs() <= 0.5 / r.scale());
    }

    #[test]
    fn omsel_returns_lower_median(v in pow2_vec(), seed in any::<u64>()) {
        let mut s = Session::new(ring(), seed);
        let shared = share_ints(&mut s, &v);
        let out = omsel(&mut s, &shared, &OmselConfig::default()).unwrap();
        prop_assert_eq!(s.peek_signed(&out.median), sort_median_i64(&v).unwrap());
        let t = s.ledger().total();
        prop_assert_eq!(t.cmp, t.mux);
    }

    #[test]
    fn omsel_handles_heavy_ties(v in (2u32..=6).prop_flat_map(|k| proptest::collection::vec(-2i64..2, 1usize << k)), seed in any::<u64>()) {
        let mut s = Session::new(ring(), seed);
        let shared = share_ints(&mut s, &v);
        let out = omsel(&mut s, &shared, &OmselConfig::default()).unwrap();
        prop_assert_eq!(s.peek_signed(&out.median), sort_median_i64(&v).unwrap());
    }

    #[test]
    fn bitonic_sorts(v in pow2_vec(), seed in any::<u64>()) {
        let mut s = Session::new(ring(), seed);
        let shared = share_ints(&mut s, &v);
        let sorted = bitonic_sort(&mut s, &shared).unwrap();
        let got: Vec<i64> = sorted.iter().map(|x| s.peek_signed(&x)).collect();
        let mut want = v.clone();
        want.sort_unstable();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn compaction_is_a_stable_filter(
        rows in proptest::collection::vec(-1_000i64..1_000, 1..24),
        mask in any::<u32>(),
        shift in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let keep: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let kept = keep.iter().filter(|&&b| b).count();
        let network = if shift { CompactionNetwork::Shift } else { CompactionNetwork::Transposition };
        let r = ring();
        let mut s = Session::new(r, seed);
        let shared_rows: Vec<SharedVector> = rows.iter().map(|&x| share_ints(&mut s, &[x, -x])).collect();
        let bits = share_ints(&mut s, &keep.iter().map(|&b| i64::from(b)).collect::<Vec<_>>());
        let (out, schedule) = oblivious_compact_scheduled(&mut s, &shared_rows, &bits, kept, network).unwrap();
        let want = stable_filter(&rows, &keep).unwrap();
        let got: Vec<i64> = out.iter().map(|row| s.peek_signed(&row.get(0))).collect();
        prop_assert_eq!(&got, &want);

        let others: Vec<SharedVector> = rows.iter().map(|&x| share_ints(&mut s, &[3 * x])).collect();
        let replayed = replay_compaction(&mut s, &others, &schedule).unwrap();
        let got: Vec<i64> = replayed.iter().take(kept).map(|row| s.peek_signed(&row.get(0))).collect();
        prop_assert_eq!(got, want.iter().map(|x| 3 * x).collect::<Vec<_>>());
    }

    #[test]
    fn mcn_zeroes_the_max_and_keeps_order(row in proptest::collection::vec(-4.0f64..8.0, 2..12), seed in any::<u64>()) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(max > 1.0);
        let mut s = Session::new(ring(), seed);
        let shared = s.share_reals(&row).unwrap();
        let mx = secure_row_max(&mut s, &shared).unwrap();
        let out = mcn_row(&mut s, &shared, &mx, 2).unwrap().decode(s.ring());
        let tol = 2f64.powi(-10);
        for (i, (&x, &y)) in row.iter().zip(&out).enumerate() {
            prop_assert!(y <= tol);
            if x == max {
                prop_assert!(y.abs() <= tol);
            }
            for (&x2, &y2) in row.iter().zip(&out).skip(i + 1) {
                if x < x2 {
                    prop_assert!(y <= y2 + tol);
                }
            }
        }
    }
}
