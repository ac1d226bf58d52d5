//! Brute-force plaintext references for checking the secure path.
//!
//! Nothing here calls into the protocol code; the ring oracle redoes the
//! fixed-point arithmetic on plain integers.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Rank-`len/2` smallest element (rank 1 for a single element), by sorting.
pub fn sort_median(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(domain("median of an empty vector"));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[(v.len() / 2).max(1) - 1])
}

/// Same rank as [`sort_median`], by Hoare-style quickselect with a
/// middle pivot. Kept separate so the two can cross-check each other.
pub fn quickselect_median(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(domain("median of an empty vector"));
    }
    let mut a = v.to_vec();
    let k = (v.len() / 2).max(1) - 1;
    let (mut lo, mut hi) = (0usize, a.len() - 1);
    while lo < hi {
        let pivot = a[lo + (hi - lo) / 2];
        let (mut i, mut j) = (lo, hi);
        loop {
            while a[i] < pivot {
                i += 1;
            }
            while a[j] > pivot {
                j -= 1;
            }
            if i >= j {
                break;
            }
            a.swap(i, j);
            i += 1;
            j -= 1;
        }
        if k <= j {
            hi = j;
        } else {
            lo = j + 1;
        }
    }
    Ok(a[k])
}

/// Integer version of the median for ring values.
pub fn sort_median_i64(v: &[i64]) -> Result<i64> {
    if v.is_empty() {
        return Err(domain("median of an empty vector"));
    }
    let mut s = v.to_vec();
    s.sort_unstable();
    Ok(s[(v.len() / 2).max(1) - 1])
}

/// Column sums of unnormalized Softmax numerators, `exp(a_ij - max_i)`,
/// over all rows and heads. `a[h][i][j]`.
pub fn we_ph1_scores(a: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let m = a.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m];
    for head in a {
        for row in head {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (j, &x) in row.iter().enumerate() {
                out[j] += (x - max).exp();
            }
        }
    }
    out
}

/// Plaintext MCN column sums in doubles: `sum_h sum_i (a_ij - max_i) / max_i^n`
/// after adding `offset` to every entry.
pub fn mcn_scores_reference(a: &[Vec<Vec<f64>>], n_exp: u32, offset: f64) -> Result<Vec<f64>> {
    let m = a.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m];
    for head in a {
        for row in head {
            let max = row.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x + offset));
            if max <= 0.0 {
                return Err(domain(format!("row maximum {max} is not positive")));
            }
            let denom = max.powi(n_exp as i32);
            for (j, &x) in row.iter().enumerate() {
                out[j] += (x + offset - max) / denom;
            }
        }
    }
    Ok(out)
}

/// Fixed-point MCN scores computed with plain integers, mirroring the
/// protocol's rounding exactly: encode with round-to-nearest, reciprocal
/// `round(2^(2f) / max)`, and truncation `floor((v + 2^(f-1)) / 2^f)` after
/// every product. Returns raw scaled integers.
pub fn mcn_scores_ring(a: &[Vec<Vec<f64>>], n_exp: u32, offset: f64, frac_bits: u32) -> Result<Vec<i64>> {
    let one = 1i128 << frac_bits;
    let enc = |x: f64| (x * one as f64).round() as i128;
    let trunc = |v: i128| (v + (one >> 1)).div_euclid(one);
    let m = a.first().map_or(0, Vec::len);
    let off = enc(offset);
    let mut out = vec![0i128; m];
    for head in a {
        for row in head {
            let shifted: Vec<i128> = row.iter().map(|&x| enc(x) + off).collect();
            let max = *shifted.iter().max().ok_or_else(|| domain("empty row"))?;
            if max <= 0 {
                return Err(domain("row maximum is not positive"));
            }
            let inv = (one * one + max / 2) / max;
            for (j, &x) in shifted.iter().enumerate() {
                let mut v = x - max;
                for _ in 0..n_exp {
                    v = trunc(v * inv);
                }
                out[j] += v;
            }
        }
    }
    Ok(out.into_iter().map(|v| v as i64).collect())
}

/// Indices kept by the half-and-half rule: strictly above the rank-`n/2`
/// value, ties ranked by lower index first.
pub fn half_keep_set<T: PartialOrd + Copy>(scores: &[T]) -> Vec<usize> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    // descending by score, ascending by index among equals
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let mut keep: Vec<usize> = order[..n / 2].to_vec();
    keep.sort_unstable();
    keep
}

pub fn stable_filter<T: Clone>(tokens: &[T], keep: &[bool]) -> Result<Vec<T>> {
    if tokens.len() != keep.len() {
        return Err(domain(format!("{} tokens but {} keep bits", tokens.len(), keep.len())));
    }
    Ok(tokens.iter().zip(keep).filter(|(_, &k)| k).map(|(t, _)| t.clone()).collect())
}

pub fn masked_mean(v: &[f64], alive: &[bool]) -> Result<f64> {
    if v.len() != alive.len() {
        return Err(domain("mask length differs from vector length"));
    }
    let (sum, count) = v.iter().zip(alive).filter(|(_, &a)| a).fold((0.0, 0usize), |(s, c), (&x, _)| (s + x, c + 1));
    if count == 0 {
        return Err(Error::Domain("mean over an empty mask".into()));
    }
    Ok(sum / count as f64)
}

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub case_id: String,
    pub inputs: String,
    pub oracle_output: f64,
    pub system_output: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn compare(
        case_id: impl Into<String>,
        inputs: impl Into<String>,
        oracle: f64,
        system: f64,
        tolerance: f64,
    ) -> OracleReport {
        let discrepancy = (oracle - system).abs();
        OracleReport {
            case_id: case_id.into(),
            inputs: inputs.into(),
            oracle_output: oracle,
            system_output: system,
            discrepancy,
            tolerance,
            pass: discrepancy <= tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn median_examples() {
        assert_eq!(sort_median(&[3.0, 1.0, 2.0, 4.0]).unwrap(), 2.0);
        assert_eq!(sort_median(&[5.0]).unwrap(), 5.0);
        assert!(sort_median(&[]).is_err());
        assert_eq!(quickselect_median(&[5.0]).unwrap(), 5.0);
        assert_eq!(sort_median_i64(&[9, -2, 4, 4]).unwrap(), 4);
    }

    #[test]
    fn medians_agree() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let n = rng.gen_range(1..80);
            let v: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-20i32..20))).collect();
            assert_eq!(sort_median(&v).unwrap(), quickselect_median(&v).unwrap());
        }
    }

    #[test]
    fn ph1_examples() {
        let uniform = vec![vec![vec![0.5; 4]; 4]; 2];
        let s = we_ph1_scores(&uniform);
        assert!(s.iter().all(|&x| (x - 8.0).abs() < 1e-12));

        let mut dom = vec![vec![vec![0.0; 3]; 3]];
        for row in &mut dom[0] {
            row[1] = 5.0;
        }
        let s = we_ph1_scores(&dom);
        assert!(s[1] > s[0] && s[1] > s[2]);

        // a direct re-derivation with softmax numerators
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a: Vec<Vec<Vec<f64>>> =
            (0..2).map(|_| (0..5).map(|_| (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect()).collect();
        let s = we_ph1_scores(&a);
        for (j, &sj) in s.iter().enumerate() {
            let mut direct = 0.0;
            for head in &a {
                for row in head {
                    let e: Vec<f64> = row.iter().map(|x| x.exp()).collect();
                    let emax = e.iter().copied().fold(0.0, f64::max);
                    direct += e[j] / emax;
                }
            }
            assert!((direct - sj).abs() < 1e-9);
        }
    }

    #[test]
    fn ring_oracle_tracks_reals() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a: Vec<Vec<Vec<f64>>> =
            (0..3).map(|_| (0..6).map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()).collect();
        let exact = mcn_scores_reference(&a, 2, 4.0).unwrap();
        let fixed = mcn_scores_ring(&a, 2, 4.0, 12).unwrap();
        for (e, f) in exact.iter().zip(&fixed) {
            assert!((e - *f as f64 / 4096.0).abs() < 18.0 * 2f64.powi(-9));
        }
    }

    #[test]
    fn filters() {
        let t = ["a", "b", "c", "d"];
        assert_eq!(stable_filter(&t, &[true, false, true, false]).unwrap(), vec!["a", "c"]);
        assert_eq!(stable_filter(&t, &[true; 4]).unwrap(), t.to_vec());
        assert!(stable_filter(&t, &[true]).is_err());
        assert_eq!(half_keep_set(&[0.9, 0.1, 0.5, 0.7, 0.3, 0.8, 0.2, 0.6]), vec![0, 3, 5, 7]);
        assert_eq!(half_keep_set(&[1.0; 4]), vec![0, 1]);
        assert_eq!(masked_mean(&[1.0, 2.0, 3.0, 4.0, 5.0], &[false, true, false, true, false]).unwrap(), 3.0);
        assert!(masked_mean(&[1.0], &[false]).is_err());
        let r = OracleReport::compare("c", "x", 1.0, 1.0005, 1e-3);
        assert!(r.pass);
    }
}
