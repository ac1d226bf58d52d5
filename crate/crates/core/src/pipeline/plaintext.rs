//! Floating-point reference of one encoder layer, with optional token drop.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{domain, Error, Result};
use crate::mcn::McnParams;

pub type Matrix = Vec<Vec<f64>>;

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            let mut out = vec![0.0; cols];
            for (k, &x) in row.iter().enumerate() {
                for (o, &y) in out.iter_mut().zip(&b[k]) {
                    *o += x * y;
                }
            }
            out
        })
        .collect()
}

fn add_bias(mut m: Matrix, bias: &[f64]) -> Matrix {
    for row in &mut m {
        for (x, b) in row.iter_mut().zip(bias) {
            *x += b;
        }
    }
    m
}

fn add(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn columns(m: &Matrix, start: usize, end: usize) -> Matrix {
    m.iter().map(|r| r[start..end].to_vec()).collect()
}

/// Row-wise `exp(x - max) / sum`.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    m.iter()
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
            let sum: f64 = e.iter().sum();
            e.into_iter().map(|x| x / sum).collect()
        })
        .collect()
}

pub fn layer_norm(m: &Matrix, gamma: &[f64], beta: &[f64]) -> Matrix {
    const EPS: f64 = 1e-5;
    m.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + EPS).sqrt();
            row.iter().zip(gamma).zip(beta).map(|((x, g), b)| (x - mean) * inv * g + b).collect()
        })
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// MCN column sums over rows and heads: `(x - max)/max^n` after adding the
/// public offset to every logit.
pub fn mcn_scores(logits: &[Matrix], params: &McnParams) -> Result<Vec<f64>> {
    let m = logits.first().map_or(0, Vec::len);
    let mut scores = vec![0.0; m];
    for head in logits {
        for row in head {
            let shifted: Vec<f64> = row.iter().map(|x| x + params.offset).collect();
            let max = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max <= 0.0 {
                return Err(domain(format!("row maximum {max} is not positive; raise the offset")));
            }
            let scale = max.powi(params.n_exp as i32).recip();
            for (s, x) in scores.iter_mut().zip(&shifted) {
                *s += (x - max) * scale;
            }
        }
    }
    Ok(scores)
}

/// Column sums of the first Softmax phase, `exp(x - max)`, without the
/// normalizing division.
pub fn ph1_scores(logits: &[Matrix]) -> Vec<f64> {
    let m = logits.first().map_or(0, Vec::len);
    let mut scores = vec![0.0; m];
    for head in logits {
        for row in head {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (s, x) in scores.iter_mut().zip(row) {
                *s += (x - max).exp();
            }
        }
    }
    scores
}

/// The `n/2` highest-scoring indices in ascending order; among equal scores
/// lower indices win.
pub fn half_keep(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(scores.len() / 2);
    idx.sort_unstable();
    idx
}

/// Restricts every head to the rows and columns in `keep`.
pub fn select_tokens(logits: &[Matrix], keep: &[usize]) -> Vec<Matrix> {
    logits.iter().map(|h| keep.iter().map(|&i| keep.iter().map(|&j| h[i][j]).collect()).collect()).collect()
}

fn select_rows(m: &Matrix, keep: &[usize]) -> Matrix {
    keep.iter().map(|&i| m[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub d: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub bq: Vec<f64>,
    pub bk: Vec<f64>,
    pub bv: Vec<f64>,
    pub bo: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
}

impl LayerWeights {
    /// Gaussian weights with variance `1/fan_in`, zero biases, identity
    /// normalization.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize, heads: usize) -> Result<LayerWeights> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
        }
        let d_ff = 4 * d;
        let mut gauss = |rows: usize, cols: usize| -> Matrix {
            let normal = Normal::new(0.0, (rows as f64).sqrt().recip()).expect("positive std");
            (0..rows).map(|_| (0..cols).map(|_| normal.sample(rng)).collect()).collect()
        };
        Ok(LayerWeights {
            d,
            heads,
            d_ff,
            wq: gauss(d, d),
            wk: gauss(d, d),
            wv: gauss(d, d),
            wo: gauss(d, d),
            w1: gauss(d, d_ff),
            w2: gauss(d_ff, d),
            bq: vec![0.0; d],
            bk: vec![0.0; d],
            bv: vec![0.0; d],
            bo: vec![0.0; d],
            b1: vec![0.0; d_ff],
            b2: vec![0.0; d],
            ln1_gamma: vec![1.0; d],
            ln1_beta: vec![0.0; d],
            ln2_gamma: vec![1.0; d],
            ln2_beta: vec![0.0; d],
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DropMode {
    #[default]
    None,
    /// MCN scores on the raw logits; drop before Softmax and before the
    /// value projection.
    PreSoftmax(McnParams),
    /// Softmax first-phase scores; drop after attention, from `ln2` on.
    PostSoftmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub output: Matrix,
    /// Scaled attention logits per head over all input tokens.
    pub logits: Vec<Matrix>,
    /// Softmax probabilities per head as used for the context.
    pub probs: Vec<Matrix>,
    /// Kept token indices when the layer dropped tokens.
    pub kept: Option<Vec<usize>>,
}

/// Scaled logits `Q_h K_h^T / sqrt(d/H)` for every head.
pub fn attention_logits(input: &Matrix, w: &LayerWeights) -> Vec<Matrix> {
    let q = add_bias(matmul(input, &w.wq), &w.bq);
    let k = add_bias(matmul(input, &w.wk), &w.bk);
    let dh = w.head_dim();
    let scale = (dh as f64).sqrt().recip();
    (0..w.heads)
        .map(|h| {
            let qh = columns(&q, h * dh, (h + 1) * dh);
            let kh = columns(&k, h * dh, (h + 1) * dh);
            qh.iter()
                .map(|qi| kh.iter().map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale).collect())
                .collect()
        })
        .collect()
}

pub fn plaintext_layer(input: &Matrix, w: &LayerWeights, mode: DropMode) -> Result<LayerOutput> {
    if input.is_empty() || input.iter().any(|r| r.len() != w.d) {
        return Err(domain(format!("layer input must be m x {}", w.d)));
    }
    if input.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite layer input".into()));
    }
    let logits = attention_logits(input, w);
    let mut kept = None;
    let (attn_logits, v_input, mut residual) = match mode {
        DropMode::PreSoftmax(params) => {
            let keep = half_keep(&mcn_scores(&logits, &params)?);
            let reduced = select_tokens(&logits, &keep);
            let rows = select_rows(input, &keep);
            kept = Some(keep);
            (reduced, rows.clone(), rows)
        }
        _ => (logits.clone(), input.clone(), input.clone()),
    };
    let v = add_bias(matmul(&v_input, &w.wv), &w.bv);
    let dh = w.head_dim();
    let probs: Vec<Matrix> = attn_logits.iter().map(softmax_rows).collect();
    let mut context: Matrix = vec![Vec::with_capacity(w.d); probs[0].len()];
    for (h, p) in probs.iter().enumerate() {
        let ctx = matmul(p, &columns(&v, h * dh, (h + 1) * dh));
        for (row, part) in context.iter_mut().zip(ctx) {
            row.extend(part);
        }
    }
    let mut attn = add_bias(matmul(&context, &w.wo), &w.bo);
    if let DropMode::PostSoftmax = mode {
        let keep = half_keep(&ph1_scores(&logits));
        attn = select_rows(&attn, &keep);
        residual = select_rows(&residual, &keep);
        kept = Some(keep);
    }
    let hidden = layer_norm(&add(&attn, &residual), &w.ln1_gamma, &w.ln1_beta);
    let ff: Matrix =
        add_bias(matmul(&hidden, &w.w1), &w.b1).into_iter().map(|r| r.into_iter().map(gelu).collect()).collect();
    let ff = add_bias(matmul(&ff, &w.w2), &w.b2);
    let output = layer_norm(&add(&ff, &hidden), &w.ln2_gamma, &w.ln2_beta);
    if output.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("layer output is not finite".into()));
    }
    Ok(LayerOutput { output, logits, probs, kept })
}
