//! Fixed inputs shared by the benchmarks.

use rand::Rng;
use tokendrop_core::synth::{mcn_shaped_scores, random_attention, rng_for, AttentionShape};
use tokendrop_core::{McnParams, Result};

pub const SEED: u64 = 0x6265_6e63;

/// MCN-shaped score vector of length `n`.
pub fn scores(n: usize) -> Result<Vec<f64>> {
    mcn_shaped_scores(&mut rng_for(SEED, n as u64, 0), n, AttentionShape::default(), &McnParams::default())
}

/// Uniform scores in `[-8, 8)`.
pub fn uniform(n: usize) -> Vec<f64> {
    let mut rng = rng_for(SEED, 1 << 32 | n as u64, 0);
    (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect()
}

/// Per-head attention logits for `m` tokens.
pub fn logits(m: usize, heads: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    random_attention(&mut rng_for(SEED, 2 << 32 | m as u64, 0), m, AttentionShape { d_model: 16, heads })
}
