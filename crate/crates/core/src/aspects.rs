//! Appeal-detection models: a span tagger (encoder + boundary CRF + span
//! label head) and a document-level multi-label classifier (encoder +
//! pooled label head).
//!
//! Span offsets on the wire are character offsets; internally the models
//! work in token space and map back through token offsets, so both
//! character- and word-mode encoders are supported.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{bioe_decode, bioe_encode, SpanAnnotation};
use crate::crf::{CrfGrad, CrfParams, NUM_TAGS};
use crate::encoder::{tokenize, Encoded, EncoderConfig, EncoderGrad, EncoderParams, TokenSpan};
use crate::error::Result;
use crate::nn::{bce_with_logit, sigmoid, Affine, AffineGrad, Mlp, MlpGrad, ParamCursor};
use crate::taxonomy::{LabelVector, NUM_LABELS};

/// Shared shape/decision settings for both aspect models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectConfig {
    pub encoder: EncoderConfig,
    /// Probability cutoff for emitting a label.
    pub threshold: f64,
}

impl AspectConfig {
    pub fn new(encoder: EncoderConfig) -> Self {
        AspectConfig {
            encoder,
            threshold: 0.5,
        }
    }
}

/// One predicted span with its selected labels and their probabilities.
/// When nothing clears the threshold the single most probable label is
/// kept and `low_confidence` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub start: usize,
    pub end: usize,
    pub labels: Vec<(u8, f64)>,
    pub low_confidence: bool,
}

impl SpanPrediction {
    pub fn label_indices(&self) -> Vec<u8> {
        self.labels.iter().map(|&(i, _)| i).collect()
    }
}

/// Document-level prediction: full probability vector plus the labels
/// selected at the model threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DocPrediction {
    pub probs: LabelVector,
    pub labels: Vec<(u8, f64)>,
}

/// Per-document loss pieces for the span objective; batch weighting happens
/// in the training loop.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpanLossParts {
    /// Negative log-likelihood of the gold tag sequence.
    pub crf_nll: f64,
    /// Sum over gold spans of the mean-over-labels binary cross-entropy.
    pub bce_sum: f64,
    pub n_spans: usize,
}

/// Maps a character span onto the token ranges that cover it (half-open
/// token indices). Returns `None` when no token overlaps the span, e.g.
/// after truncation.
pub fn token_range(tokens: &[TokenSpan], start: usize, end: usize) -> Option<(usize, usize)> {
    let mut first = None;
    let mut last = None;
    for (i, t) in tokens.iter().enumerate() {
        if t.char_start < end && t.char_end > start {
            first.get_or_insert(i);
            last = Some(i + 1);
        }
    }
    Some((first?, last?))
}

/// Span-level appeal detector: boundary emissions feed a linear-chain CRF
/// and a shared label head classifies each decoded span from its mean
/// token vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanTaggerModel {
    pub config: AspectConfig,
    pub encoder: EncoderParams,
    /// Per-token boundary-tag scores (`NUM_TAGS x dim`).
    pub boundary: Affine,
    /// Span classifier over the mean token vector (`dim -> dim -> 21`).
    pub label_head: Mlp,
    pub crf: CrfParams,
}

impl SpanTaggerModel {
    pub fn init(config: AspectConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.encoder.dim;
        SpanTaggerModel {
            config,
            encoder: EncoderParams::init(config.encoder, &mut rng, false),
            boundary: Affine::variance_scaled(NUM_TAGS, d, &mut rng),
            label_head: Mlp::variance_scaled(d, d, NUM_LABELS, &mut rng),
            crf: CrfParams::zeros(),
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenSpan>> {
        tokenize(text, self.config.encoder.mode)
    }

    fn emissions(&self, enc: &Encoded) -> Vec<[f64; NUM_TAGS]> {
        let mut out = vec![[0.0; NUM_TAGS]; enc.n];
        for i in 0..enc.n {
            let e = self.boundary.forward(enc.token_vec(i));
            out[i].copy_from_slice(&e);
        }
        out
    }

    /// Gold character spans mapped to token space, dropping any span left
    /// uncovered by tokenization or truncation.
    fn gold_token_spans(
        tokens: &[TokenSpan],
        gold: &[SpanAnnotation],
    ) -> Result<Vec<SpanAnnotation>> {
        let mut mapped = Vec::with_capacity(gold.len());
        let mut dropped = 0usize;
        for span in gold {
            match token_range(tokens, span.start, span.end) {
                Some((s, e)) => {
                    mapped.push(SpanAnnotation::new(s, e, span.labels.iter().copied())?)
                }
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            log::debug!("dropped {dropped} gold span(s) with no covering tokens");
        }
        Ok(mapped)
    }

    /// Loss pieces without gradients (dev evaluation, gradient checking).
    pub fn losses(&self, text: &str, gold: &[SpanAnnotation]) -> Result<SpanLossParts> {
        let tokens = self.tokenize(text)?;
        let enc = self.encoder.encode(&tokens)?;
        let mapped = Self::gold_token_spans(&tokens, gold)?;
        let tags = bioe_encode(&mapped, enc.n)?;
        let emissions = self.emissions(&enc);
        let crf_nll = -self.crf.log_likelihood(&emissions, &tags);
        let mut bce_sum = 0.0;
        for span in &mapped {
            let target = span.label_vector();
            let x = enc.mean_over(span.start, span.end);
            let (_, logits) = self.label_head.forward(&x);
            let mut loss = 0.0;
            for (k, &z) in logits.iter().enumerate() {
                loss += bce_with_logit(z, target.0[k]).0;
            }
            bce_sum += loss / NUM_LABELS as f64;
        }
        Ok(SpanLossParts {
            crf_nll,
            bce_sum,
            n_spans: mapped.len(),
        })
    }

    /// Accumulates gradients for one document. The CRF part is scaled by
    /// `crf_scale` and each span's classification part by `bce_scale`;
    /// returned losses are unscaled.
    pub fn grad_step(
        &self,
        text: &str,
        gold: &[SpanAnnotation],
        crf_scale: f64,
        bce_scale: f64,
        grad: &mut SpanTaggerGrad,
    ) -> Result<SpanLossParts> {
        let tokens = self.tokenize(text)?;
        let enc = self.encoder.encode(&tokens)?;
        let mapped = Self::gold_token_spans(&tokens, gold)?;
        let tags = bioe_encode(&mapped, enc.n)?;
        let emissions = self.emissions(&enc);
        let d = enc.dim;

        let mut grad_em = vec![[0.0; NUM_TAGS]; enc.n];
        let crf_nll = self
            .crf
            .nll_and_grad(&emissions, &tags, crf_scale, &mut grad.crf, &mut grad_em);

        // Route emission gradients through the boundary head into dh.
        let mut dh = vec![0.0; enc.n * d];
        for i in 0..enc.n {
            self.boundary.backward(
                enc.token_vec(i),
                &grad_em[i],
                &mut grad.boundary,
                Some(&mut dh[i * d..(i + 1) * d]),
            );
        }

        // Span classification: mean-pool token vectors, BCE on all labels.
        let mut bce_sum = 0.0;
        for span in &mapped {
            let target = span.label_vector();
            let x = enc.mean_over(span.start, span.end);
            let (hidden, logits) = self.label_head.forward(&x);
            let mut dlogits = vec![0.0; NUM_LABELS];
            let mut loss = 0.0;
            for (k, &z) in logits.iter().enumerate() {
                let (l, dz) = bce_with_logit(z, target.0[k]);
                loss += l;
                dlogits[k] = dz * bce_scale / NUM_LABELS as f64;
            }
            bce_sum += loss / NUM_LABELS as f64;
            let mut dx = vec![0.0; d];
            self.label_head
                .backward(&x, &hidden, &dlogits, &mut grad.label_head, Some(&mut dx));
            let len = (span.end - span.start) as f64;
            for i in span.start..span.end {
                for k in 0..d {
                    dh[i * d + k] += dx[k] / len;
                }
            }
        }

        self.encoder.backward(&enc, &dh, None, &mut grad.encoder);
        Ok(SpanLossParts {
            crf_nll,
            bce_sum,
            n_spans: mapped.len(),
        })
    }

    /// Decodes spans for one text and classifies each.
    pub fn predict(&self, text: &str) -> Result<Vec<SpanPrediction>> {
        let tokens = self.tokenize(text)?;
        let enc = self.encoder.encode(&tokens)?;
        Ok(self.predict_encoded(&tokens, &enc))
    }

    /// Classifies the given character spans without decoding boundaries
    /// (oracle-boundary evaluation). Spans that no token covers are skipped.
    pub fn predict_with_boundaries(
        &self,
        text: &str,
        spans: &[(usize, usize)],
    ) -> Result<Vec<SpanPrediction>> {
        let tokens = self.tokenize(text)?;
        let enc = self.encoder.encode(&tokens)?;
        let ranges: Vec<(usize, usize)> = spans
            .iter()
            .filter_map(|&(s, e)| token_range(&tokens, s, e))
            .collect();
        Ok(self.classify_ranges(&tokens, &enc, &ranges))
    }

    /// Prediction over an already-encoded sequence (also used with imported
    /// token vectors).
    pub fn predict_encoded(&self, tokens: &[TokenSpan], enc: &Encoded) -> Vec<SpanPrediction> {
        let emissions = self.emissions(enc);
        let tags = self.crf.viterbi(&emissions);
        let ranges = bioe_decode(&tags);
        self.classify_ranges(tokens, enc, &ranges)
    }

    fn classify_ranges(
        &self,
        tokens: &[TokenSpan],
        enc: &Encoded,
        ranges: &[(usize, usize)],
    ) -> Vec<SpanPrediction> {
        let mut preds = Vec::new();
        for &(s, e) in ranges {
            let x = enc.mean_over(s, e);
            let (_, logits) = self.label_head.forward(&x);
            let mut labels: Vec<(u8, f64)> = Vec::new();
            for (k, &z) in logits.iter().enumerate() {
                let p = sigmoid(z);
                if p >= self.config.threshold {
                    labels.push((k as u8 + 1, p));
                }
            }
            let low_confidence = labels.is_empty();
            if low_confidence {
                let (best, best_p) = logits
                    .iter()
                    .enumerate()
                    .map(|(k, &z)| (k as u8 + 1, sigmoid(z)))
                    .fold((1u8, f64::NEG_INFINITY), |acc, cur| {
                        if cur.1 > acc.1 {
                            cur
                        } else {
                            acc
                        }
                    });
                labels.push((best, best_p));
            }
            preds.push(SpanPrediction {
                start: tokens[s].char_start,
                end: tokens[e - 1].char_end,
                labels,
                low_confidence,
            });
        }
        preds
    }

    pub fn sgd_step(&mut self, grad: &SpanTaggerGrad, lr: f64) {
        self.encoder.sgd_step(&grad.encoder, lr);
        self.boundary.sgd_step(&grad.boundary, lr);
        self.label_head.sgd_step(&grad.label_head, lr);
        self.crf.sgd_step(&grad.crf, lr);
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.encoder.write_params(out);
        self.boundary.write_params(out);
        self.label_head.write_params(out);
        self.crf.write_params(out);
    }

    pub fn read_params(&mut self, cursor: &mut ParamCursor) {
        self.encoder.read_params(cursor);
        self.boundary.read_params(cursor);
        self.label_head.read_params(cursor);
        self.crf.read_params(cursor);
    }
}

/// Gradient accumulator shaped like [`SpanTaggerModel`].
#[derive(Debug, Clone)]
pub struct SpanTaggerGrad {
    pub encoder: EncoderGrad,
    pub boundary: AffineGrad,
    pub label_head: MlpGrad,
    pub crf: CrfGrad,
}

impl SpanTaggerGrad {
    pub fn zeros_like(model: &SpanTaggerModel) -> Self {
        SpanTaggerGrad {
            encoder: EncoderGrad::zeros_like(&model.encoder),
            boundary: AffineGrad::zeros_like(&model.boundary),
            label_head: MlpGrad::zeros_like(&model.label_head),
            crf: CrfGrad::zeros(),
        }
    }

    pub fn clear(&mut self) {
        self.encoder.clear();
        self.boundary.clear();
        self.label_head.clear();
        self.crf.clear();
    }

    pub fn write_params(&self, model: &SpanTaggerModel, out: &mut Vec<f64>) {
        self.encoder.write_params(&model.encoder, out);
        self.boundary.write_params(out);
        self.label_head.write_params(out);
        self.crf.write_params(out);
    }
}

/// Document-level multi-label appeal classifier over the pooled encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocClassifierModel {
    pub config: AspectConfig,
    pub encoder: EncoderParams,
    /// Classifier over the pooled vector (`dim -> dim -> 21`).
    pub label_head: Mlp,
}

impl DocClassifierModel {
    pub fn init(config: AspectConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.encoder.dim;
        DocClassifierModel {
            config,
            encoder: EncoderParams::init(config.encoder, &mut rng, false),
            label_head: Mlp::variance_scaled(d, d, NUM_LABELS, &mut rng),
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenSpan>> {
        tokenize(text, self.config.encoder.mode)
    }

    /// Mean-over-labels BCE against the target vector, no gradients.
    pub fn loss(&self, text: &str, target: &LabelVector) -> Result<f64> {
        let tokens = self.tokenize(text)?;
        let enc = self.encoder.encode(&tokens)?;
        let (_, logits) = self.label_head.forward(&enc.pooled);
        let mut loss = 0.0;
        for (k, &z) in logits.iter().enumerate() {
            loss += bce_with_logit(z, target.0[k]).0;
        }
        Ok(loss / NUM_LABELS as f64)
    }

    /// Accumulates `scale` times the gradient of the mean-over-labels BCE;
    /// returns the unscaled loss.
    pub fn grad_step(
        &self,
        text: &str,
        target: &LabelVector,
        scale: f64,
        grad: &mut DocClassifierGrad,
    ) -> Result<f64> {
        let tokens = self.tokenize(text)?;
        let enc = self.encoder.encode(&tokens)?;
        let (hidden, logits) = self.label_head.forward(&enc.pooled);
        let mut dlogits = vec![0.0; NUM_LABELS];
        let mut loss = 0.0;
        for (k, &z) in logits.iter().enumerate() {
            let (l, dz) = bce_with_logit(z, target.0[k]);
            loss += l;
            dlogits[k] = dz * scale / NUM_LABELS as f64;
        }
        let mut dpooled = vec![0.0; enc.dim];
        self.label_head.backward(
            &enc.pooled,
            &hidden,
            &dlogits,
            &mut grad.label_head,
            Some(&mut dpooled),
        );
        let dh = vec![0.0; enc.n * enc.dim];
        self.encoder
            .backward(&enc, &dh, Some(&dpooled), &mut grad.encoder);
        Ok(loss / NUM_LABELS as f64)
    }

    pub fn predict(&self, text: &str) -> Result<DocPrediction> {
        let tokens = self.tokenize(text)?;
        let enc = self.encoder.encode(&tokens)?;
        Ok(self.predict_encoded(&enc))
    }

    pub fn predict_encoded(&self, enc: &Encoded) -> DocPrediction {
        let (_, logits) = self.label_head.forward(&enc.pooled);
        let mut probs = LabelVector::zeros();
        let mut labels = Vec::new();
        for (k, &z) in logits.iter().enumerate() {
            let p = sigmoid(z);
            probs.0[k] = p;
            if p >= self.config.threshold {
                labels.push((k as u8 + 1, p));
            }
        }
        DocPrediction { probs, labels }
    }

    pub fn sgd_step(&mut self, grad: &DocClassifierGrad, lr: f64) {
        self.encoder.sgd_step(&grad.encoder, lr);
        self.label_head.sgd_step(&grad.label_head, lr);
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.encoder.write_params(out);
        self.label_head.write_params(out);
    }

    pub fn read_params(&mut self, cursor: &mut ParamCursor) {
        self.encoder.read_params(cursor);
        self.label_head.read_params(cursor);
    }
}

/// Gradient accumulator shaped like [`DocClassifierModel`].
#[derive(Debug, Clone)]
pub struct DocClassifierGrad {
    pub encoder: EncoderGrad,
    pub label_head: MlpGrad,
}

impl DocClassifierGrad {
    pub fn zeros_like(model: &DocClassifierModel) -> Self {
        DocClassifierGrad {
            encoder: EncoderGrad::zeros_like(&model.encoder),
            label_head: MlpGrad::zeros_like(&model.label_head),
        }
    }

    pub fn clear(&mut self) {
        self.encoder.clear();
        self.label_head.clear();
    }

    pub fn write_params(&self, model: &DocClassifierModel, out: &mut Vec<f64>) {
        self.encoder.write_params(&model.encoder, out);
        self.label_head.write_params(out);
    }
}
