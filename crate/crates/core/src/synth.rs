//! Seeded generators for synthetic attention and score vectors.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::mcn::McnParams;
use crate::pipeline::plaintext::{attention_logits, mcn_scores, LayerWeights, Matrix};

/// Independent seed for item `index` of stream `stream` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

pub fn rng_for(base: u64, stream: u64, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(base, stream, index))
}

/// Shape of the random layer behind synthetic attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionShape {
    pub d_model: usize,
    pub heads: usize,
}

impl Default for AttentionShape {
    fn default() -> Self {
        AttentionShape { d_model: 32, heads: 4 }
    }
}

/// Standard-normal token embeddings.
pub fn gaussian_tokens<R: RngCore>(rng: &mut R, m: usize, d: usize) -> Matrix {
    (0..m).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// Scaled attention logits of a random layer applied to random tokens.
pub fn random_attention<R: RngCore>(rng: &mut R, m: usize, shape: AttentionShape) -> Result<Vec<Matrix>> {
    let w = LayerWeights::random(rng, shape.d_model, shape.heads)?;
    let x = gaussian_tokens(rng, m, shape.d_model);
    Ok(attention_logits(&x, &w))
}

/// MCN-aggregated scores of random attention: the default input shape for
/// median selection benchmarks.
pub fn mcn_shaped_scores<R: RngCore>(
    rng: &mut R,
    m: usize,
    shape: AttentionShape,
    params: &McnParams,
) -> Result<Vec<f64>> {
    let logits = random_attention(rng, m, shape)?;
    mcn_scores(&logits, params)
}
