//! The trainable text encoder: tokenization, hashed embeddings with learned
//! positions, and a window-3 tanh projection producing one vector per token
//! plus a mean-pooled document vector.
//!
//! Token offsets are character offsets. Character mode emits one token per
//! Unicode scalar value; word mode uses Unicode word-boundary segmentation
//! and drops whitespace-only segments. Sequences are truncated to
//! [`MAX_TOKENS`] with a log notice.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::fnv1a64;
use crate::error::{Error, Result};
use crate::nn::{Affine, AffineGrad, ParamCursor};

/// Hard cap on sequence length; longer inputs are tail-truncated.
pub const MAX_TOKENS: usize = 512;

/// Default embedding-table size (power of two for cheap modulo).
pub const DEFAULT_BUCKETS: usize = 1 << 15;

/// Tokenization granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    Char,
    Word,
}

/// One token with its character span in the source text (`char_end`
/// exclusive). In char mode, token index equals character offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Splits text into tokens with character offsets. Errors if the text is
/// empty or whitespace-only. Offsets tile the text: char mode covers every
/// character; word mode covers everything except skipped whitespace runs.
pub fn tokenize(text: &str, mode: TokenMode) -> Result<Vec<TokenSpan>> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot tokenize empty text"));
    }
    let mut tokens = Vec::new();
    match mode {
        TokenMode::Char => {
            for (i, ch) in text.chars().enumerate() {
                tokens.push(TokenSpan {
                    text: ch.to_string(),
                    char_start: i,
                    char_end: i + 1,
                });
            }
        }
        TokenMode::Word => {
            let mut char_pos = 0usize;
            for segment in text.split_word_bounds() {
                let len = segment.chars().count();
                if !segment.chars().all(char::is_whitespace) {
                    tokens.push(TokenSpan {
                        text: segment.to_string(),
                        char_start: char_pos,
                        char_end: char_pos + len,
                    });
                }
                char_pos += len;
            }
        }
    }
    if tokens.len() > MAX_TOKENS {
        log::debug!(
            "truncating token sequence from {} to {MAX_TOKENS}",
            tokens.len()
        );
        tokens.truncate(MAX_TOKENS);
    }
    Ok(tokens)
}

/// Encoder shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: TokenMode,
    pub dim: usize,
    pub buckets: usize,
    pub max_len: usize,
}

impl EncoderConfig {
    pub fn new(mode: TokenMode, dim: usize) -> Self {
        EncoderConfig {
            mode,
            dim,
            buckets: DEFAULT_BUCKETS,
            max_len: MAX_TOKENS,
        }
    }
}

/// Trainable encoder parameters: a hashed token-embedding table, positional
/// embeddings, and the window-3 projection (`3*dim -> dim`) whose tanh
/// output is the per-token vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// `buckets x dim`, row-major.
    pub table: Vec<f64>,
    /// `max_len x dim`, row-major.
    pub positions: Vec<f64>,
    pub proj: Affine,
}

impl EncoderParams {
    /// Seedless init used by model constructors; embeddings are
    /// `U(-0.05, 0.05)`, the projection is variance-scaled, and
    /// `zero_init` produces the all-zero debug encoder whose output is a
    /// token-independent constant.
    pub fn init(config: EncoderConfig, rng: &mut impl Rng, zero_init: bool) -> Self {
        assert!(config.dim > 0 && config.buckets > 0 && config.max_len > 0);
        let mut params = EncoderParams {
            config,
            table: vec![0.0; config.buckets * config.dim],
            positions: vec![0.0; config.max_len * config.dim],
            proj: Affine::zeros(config.dim, 3 * config.dim),
        };
        if !zero_init {
            for v in params.table.iter_mut() {
                *v = rng.random_range(-0.05..0.05);
            }
            for v in params.positions.iter_mut() {
                *v = rng.random_range(-0.05..0.05);
            }
            params.proj = Affine::variance_scaled(config.dim, 3 * config.dim, rng);
        }
        params
    }

    pub fn bucket_of(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.config.buckets as u64) as usize
    }

    /// Runs the encoder. Errors when the sequence is empty or longer than
    /// the positional table.
    pub fn encode(&self, tokens: &[TokenSpan]) -> Result<Encoded> {
        let n = tokens.len();
        let d = self.config.dim;
        if n == 0 {
            return Err(Error::invalid("cannot encode an empty token sequence"));
        }
        if n > self.config.max_len {
            return Err(Error::invalid(format!(
                "sequence length {n} exceeds encoder max_len {}",
                self.config.max_len
            )));
        }
        let mut buckets = Vec::with_capacity(n);
        let mut embeds = vec![0.0; n * d];
        for (i, token) in tokens.iter().enumerate() {
            let bucket = self.bucket_of(&token.text);
            buckets.push(bucket);
            let e = &mut embeds[i * d..(i + 1) * d];
            let row = &self.table[bucket * d..(bucket + 1) * d];
            let pos = &self.positions[i * d..(i + 1) * d];
            for k in 0..d {
                e[k] = row[k] + pos[k];
            }
        }
        let mut h = vec![0.0; n * d];
        let mut window = vec![0.0; 3 * d];
        for i in 0..n {
            window.fill(0.0);
            if i > 0 {
                window[..d].copy_from_slice(&embeds[(i - 1) * d..i * d]);
            }
            window[d..2 * d].copy_from_slice(&embeds[i * d..(i + 1) * d]);
            if i + 1 < n {
                window[2 * d..].copy_from_slice(&embeds[(i + 1) * d..(i + 2) * d]);
            }
            let z = self.proj.forward(&window);
            for (k, zv) in z.iter().enumerate() {
                h[i * d + k] = zv.tanh();
            }
        }
        let mut pooled = vec![0.0; d];
        for i in 0..n {
            for k in 0..d {
                pooled[k] += h[i * d + k];
            }
        }
        for v in pooled.iter_mut() {
            *v /= n as f64;
        }
        Ok(Encoded {
            n,
            dim: d,
            buckets,
            embeds,
            h,
            pooled,
        })
    }

    /// Backpropagates `d_loss/d_h` (and optionally `d_loss/d_pooled`)
    /// through the encoder, accumulating parameter gradients.
    pub fn backward(
        &self,
        enc: &Encoded,
        dh: &[f64],
        dpooled: Option<&[f64]>,
        grad: &mut EncoderGrad,
    ) {
        let n = enc.n;
        let d = enc.dim;
        debug_assert_eq!(dh.len(), n * d);
        let mut dh = dh.to_vec();
        if let Some(dp) = dpooled {
            debug_assert_eq!(dp.len(), d);
            for i in 0..n {
                for k in 0..d {
                    dh[i * d + k] += dp[k] / n as f64;
                }
            }
        }
        let mut dembeds = vec![0.0; n * d];
        let mut window = vec![0.0; 3 * d];
        let mut dwindow = vec![0.0; 3 * d];
        let mut dz = vec![0.0; d];
        for i in 0..n {
            window.fill(0.0);
            if i > 0 {
                window[..d].copy_from_slice(&enc.embeds[(i - 1) * d..i * d]);
            }
            window[d..2 * d].copy_from_slice(&enc.embeds[i * d..(i + 1) * d]);
            if i + 1 < n {
                window[2 * d..].copy_from_slice(&enc.embeds[(i + 1) * d..(i + 2) * d]);
            }
            for k in 0..d {
                let hv = enc.h[i * d + k];
                dz[k] = dh[i * d + k] * (1.0 - hv * hv);
            }
            dwindow.fill(0.0);
            self.proj.backward(&window, &dz, &mut grad.proj, Some(&mut dwindow));
            if i > 0 {
                for k in 0..d {
                    dembeds[(i - 1) * d + k] += dwindow[k];
                }
            }
            for k in 0..d {
                dembeds[i * d + k] += dwindow[d + k];
            }
            if i + 1 < n {
                for k in 0..d {
                    dembeds[(i + 1) * d + k] += dwindow[2 * d + k];
                }
            }
        }
        for i in 0..n {
            let row = grad
                .table
                .entry(enc.buckets[i])
                .or_insert_with(|| vec![0.0; d]);
            for k in 0..d {
                row[k] += dembeds[i * d + k];
                grad.positions[i * d + k] += dembeds[i * d + k];
            }
        }
    }

    pub fn sgd_step(&mut self, grad: &EncoderGrad, lr: f64) {
        let d = self.config.dim;
        for (&bucket, row) in &grad.table {
            let dst = &mut self.table[bucket * d..(bucket + 1) * d];
            for k in 0..d {
                dst[k] -= lr * row[k];
            }
        }
        for (p, g) in self.positions.iter_mut().zip(&grad.positions) {
            *p -= lr * g;
        }
        self.proj.sgd_step(&grad.proj, lr);
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.table);
        out.extend_from_slice(&self.positions);
        self.proj.write_params(out);
    }

    pub fn read_params(&mut self, cursor: &mut ParamCursor) {
        cursor.take_into(&mut self.table);
        cursor.take_into(&mut self.positions);
        self.proj.read_params(cursor);
    }
}

/// Encoder outputs plus the caches the backward pass needs.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub n: usize,
    pub dim: usize,
    pub buckets: Vec<usize>,
    /// Input embeddings `e_i = table[bucket_i] + positions[i]` (`n x dim`).
    pub embeds: Vec<f64>,
    /// Per-token vectors `h_i` (`n x dim`).
    pub h: Vec<f64>,
    /// Mean of all `h_i`.
    pub pooled: Vec<f64>,
}

impl Encoded {
    pub fn token_vec(&self, i: usize) -> &[f64] {
        &self.h[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean of `h_i` over the half-open token range `start..end`.
    pub fn mean_over(&self, start: usize, end: usize) -> Vec<f64> {
        assert!(start < end && end <= self.n, "bad range {start}..{end}");
        let mut out = vec![0.0; self.dim];
        for i in start..end {
            for k in 0..self.dim {
                out[k] += self.h[i * self.dim + k];
            }
        }
        let len = (end - start) as f64;
        for v in out.iter_mut() {
            *v /= len;
        }
        out
    }

    /// Builds an `Encoded` from externally supplied per-token vectors
    /// (embedding import). Backward passes are unsupported on these.
    pub fn from_vectors(vectors: &[Vec<f64>], dim: usize) -> Result<Encoded> {
        if vectors.is_empty() {
            return Err(Error::invalid("embedding import needs at least one vector"));
        }
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid(format!(
                "imported vectors must all have dimension {dim}"
            )));
        }
        let n = vectors.len();
        let mut h = vec![0.0; n * dim];
        for (i, v) in vectors.iter().enumerate() {
            h[i * dim..(i + 1) * dim].copy_from_slice(v);
        }
        let mut pooled = vec![0.0; dim];
        for i in 0..n {
            for k in 0..dim {
                pooled[k] += h[i * dim + k];
            }
        }
        for v in pooled.iter_mut() {
            *v /= n as f64;
        }
        Ok(Encoded {
            n,
            dim,
            buckets: vec![0; n],
            embeds: vec![0.0; n * dim],
            h,
            pooled,
        })
    }
}

/// Gradient accumulator shaped like [`EncoderParams`]; the embedding table
/// gradient is sparse (only touched buckets appear).
#[derive(Debug, Clone)]
pub struct EncoderGrad {
    pub table: HashMap<usize, Vec<f64>>,
    pub positions: Vec<f64>,
    pub proj: AffineGrad,
}

impl EncoderGrad {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        EncoderGrad {
            table: HashMap::new(),
            positions: vec![0.0; params.positions.len()],
            proj: AffineGrad::zeros_like(&params.proj),
        }
    }

    pub fn clear(&mut self) {
        self.table.clear();
        self.positions.fill(0.0);
        self.proj.clear();
    }

    /// Densifies the table gradient for flat-vector comparison in tests.
    pub fn write_params(&self, params: &EncoderParams, out: &mut Vec<f64>) {
        let d = params.config.dim;
        for bucket in 0..params.config.buckets {
            match self.table.get(&bucket) {
                Some(row) => out.extend_from_slice(row),
                None => out.extend(std::iter::repeat_n(0.0, d)),
            }
        }
        out.extend_from_slice(&self.positions);
        self.proj.write_params(out);
    }
}
