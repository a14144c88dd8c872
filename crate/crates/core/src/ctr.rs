//! Aspect-aware CTR regression: a field-separated textual input runs
//! through the shared encoder, an optional frozen appeal model contributes
//! a 21-bit label vector, and two tanh heads feed a sigmoid output trained
//! with (optionally impression-weighted) squared error.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AdCorpus;
use crate::encoder::{tokenize, Encoded, EncoderConfig, EncoderGrad, EncoderParams, TokenSpan};
use crate::error::{Error, Result};
use crate::metrics::{mae, rmse, weighted_auc, AucItem};
use crate::nn::{sigmoid, Affine, AffineGrad, ParamCursor};
use crate::taxonomy::{LabelVector, NUM_LABELS};
use crate::train::{EarlyStopper, EpochRecord, TrainConfig, TrainLog};
use crate::aspects::{DocClassifierModel, SpanTaggerModel};

/// Field separator joining title, description, industry, and keywords in
/// the model input (U+241E, SYMBOL FOR RECORD SEPARATOR).
pub const FIELD_SEP: char = '\u{241E}';

/// Builds the model input `title ␞ description ␞ industry ␞ keywords`.
/// Separator characters inside fields are replaced by spaces so the result
/// always contains exactly three separators.
pub fn build_input(title: &str, description: &str, industry: &str, keywords: &[String]) -> String {
    let clean = |s: &str| s.replace(FIELD_SEP, " ");
    let joined = keywords.join(" ");
    let out = format!(
        "{}{FIELD_SEP}{}{FIELD_SEP}{}{FIELD_SEP}{}",
        clean(title),
        clean(description),
        clean(industry),
        clean(&joined)
    );
    debug_assert_eq!(out.chars().filter(|&c| c == FIELD_SEP).count(), 3);
    out
}

/// Where the CTR model's aspect bits come from. Embedded models are frozen:
/// they produce features but are not updated by CTR training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum AspectProvider {
    /// Text-only model; the aspect pathway is absent from the network.
    None,
    Span { model: SpanTaggerModel },
    Doc { model: DocClassifierModel },
}

impl AspectProvider {
    /// Binary label vector for one creative text (zeros for [`Self::None`]).
    pub fn label_bits(&self, text: &str) -> Result<LabelVector> {
        match self {
            AspectProvider::None => Ok(LabelVector::zeros()),
            AspectProvider::Span { model } => {
                let mut bits = LabelVector::zeros();
                for span in model.predict(text)? {
                    for &(label, _) in &span.labels {
                        bits.set(label, 1.0);
                    }
                }
                Ok(bits)
            }
            AspectProvider::Doc { model } => {
                let pred = model.predict(text)?;
                Ok(LabelVector::from_indices(
                    pred.labels.iter().map(|&(l, _)| l),
                ))
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AspectProvider::None)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AspectProvider::None => "none",
            AspectProvider::Span { .. } => "span",
            AspectProvider::Doc { .. } => "doc",
        }
    }
}

/// CTR network shape settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtrConfig {
    pub encoder: EncoderConfig,
    /// Width of the text head.
    pub ad_dim: usize,
    /// Width of the aspect head.
    pub aspect_dim: usize,
    /// Weight each example's squared error by its impressions.
    pub weight_by_impressions: bool,
}

impl CtrConfig {
    pub fn new(encoder: EncoderConfig) -> Self {
        CtrConfig {
            encoder,
            ad_dim: 64,
            aspect_dim: 32,
            weight_by_impressions: false,
        }
    }
}

/// One regression example: prebuilt input text, frozen aspect bits, and
/// the observed counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrExample {
    pub id: String,
    pub text: String,
    pub aspects: LabelVector,
    pub impressions: u64,
    pub clicks: u64,
}

impl CtrExample {
    pub fn ctr(&self) -> f64 {
        self.clicks as f64 / self.impressions as f64
    }

    fn weight(&self, by_impressions: bool) -> f64 {
        if by_impressions {
            self.impressions as f64
        } else {
            1.0
        }
    }
}

/// Converts a corpus into regression examples, computing aspect bits from
/// the creative text once up front. Records without impressions cannot
/// define a CTR and are dropped (the count is returned).
pub fn prepare_examples(
    corpus: &AdCorpus,
    aspects: &AspectProvider,
) -> Result<(Vec<CtrExample>, usize)> {
    let mut examples = Vec::with_capacity(corpus.records.len());
    let mut dropped = 0usize;
    for ad in &corpus.records {
        if ad.impressions == 0 {
            dropped += 1;
            continue;
        }
        let bits = aspects.label_bits(&ad.text())?;
        examples.push(CtrExample {
            id: ad.id.clone(),
            text: build_input(&ad.title, &ad.description, &ad.industry, &ad.keywords),
            aspects: bits,
            impressions: ad.impressions,
            clicks: ad.clicks,
        });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} record(s) without impressions");
    }
    Ok((examples, dropped))
}

/// The CTR regressor. The aspect pathway exists only when the provider is
/// not [`AspectProvider::None`]; without it the output layer sees the text
/// head alone, so aspect bits cannot influence predictions even in
/// principle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrModel {
    pub config: CtrConfig,
    pub encoder: EncoderParams,
    /// Text head over the pooled encoding (`ad_dim x dim`), tanh output.
    pub ad_head: Affine,
    /// Aspect head over the 21 label bits (`aspect_dim x 21`), tanh output.
    pub aspect_head: Affine,
    /// Scalar output over the concatenated heads.
    pub out: Affine,
    pub aspects: AspectProvider,
}

struct CtrForward {
    enc: Encoded,
    h_ad: Vec<f64>,
    h_aspect: Vec<f64>,
    zin: Vec<f64>,
    p: f64,
}

impl CtrModel {
    pub fn init(config: CtrConfig, aspects: AspectProvider, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.encoder.dim;
        let out_cols = config.ad_dim
            + if aspects.is_none() {
                0
            } else {
                config.aspect_dim
            };
        CtrModel {
            config,
            encoder: EncoderParams::init(config.encoder, &mut rng, false),
            ad_head: Affine::variance_scaled(config.ad_dim, d, &mut rng),
            aspect_head: Affine::variance_scaled(config.aspect_dim, NUM_LABELS, &mut rng),
            out: Affine::variance_scaled(1, out_cols, &mut rng),
            aspects,
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenSpan>> {
        tokenize(text, self.config.encoder.mode)
    }

    fn forward(&self, ex: &CtrExample) -> Result<CtrForward> {
        let tokens = self.tokenize(&ex.text)?;
        let enc = self.encoder.encode(&tokens)?;
        let mut h_ad = self.ad_head.forward(&enc.pooled);
        for v in h_ad.iter_mut() {
            *v = v.tanh();
        }
        let mut zin = h_ad.clone();
        let mut h_aspect = Vec::new();
        if !self.aspects.is_none() {
            h_aspect = self.aspect_head.forward(&ex.aspects.0);
            for v in h_aspect.iter_mut() {
                *v = v.tanh();
            }
            zin.extend_from_slice(&h_aspect);
        }
        let logit = self.out.forward(&zin)[0];
        Ok(CtrForward {
            enc,
            h_ad,
            h_aspect,
            zin,
            p: sigmoid(logit),
        })
    }

    /// Predicted CTR for one example.
    pub fn predict(&self, ex: &CtrExample) -> Result<f64> {
        Ok(self.forward(ex)?.p)
    }

    /// Squared error for one example, no gradients.
    pub fn loss(&self, ex: &CtrExample) -> Result<f64> {
        let p = self.predict(ex)?;
        let y = ex.ctr();
        Ok((p - y) * (p - y))
    }

    /// Accumulates `scale` times the squared-error gradient; returns the
    /// unscaled loss.
    pub fn grad_step(&self, ex: &CtrExample, scale: f64, grad: &mut CtrGrad) -> Result<f64> {
        let fwd = self.forward(ex)?;
        let y = ex.ctr();
        let diff = fwd.p - y;
        let loss = diff * diff;
        let dlogit = 2.0 * diff * fwd.p * (1.0 - fwd.p) * scale;

        let ad_dim = self.config.ad_dim;
        let mut dzin = vec![0.0; fwd.zin.len()];
        self.out
            .backward(&fwd.zin, &[dlogit], &mut grad.out, Some(&mut dzin));

        let mut d_ad = vec![0.0; ad_dim];
        for k in 0..ad_dim {
            d_ad[k] = dzin[k] * (1.0 - fwd.h_ad[k] * fwd.h_ad[k]);
        }
        let mut dpooled = vec![0.0; self.config.encoder.dim];
        self.ad_head
            .backward(&fwd.enc.pooled, &d_ad, &mut grad.ad_head, Some(&mut dpooled));

        if !self.aspects.is_none() {
            let mut d_aspect = vec![0.0; self.config.aspect_dim];
            for k in 0..self.config.aspect_dim {
                d_aspect[k] = dzin[ad_dim + k] * (1.0 - fwd.h_aspect[k] * fwd.h_aspect[k]);
            }
            self.aspect_head
                .backward(&ex.aspects.0, &d_aspect, &mut grad.aspect_head, None);
        }

        let dh = vec![0.0; fwd.enc.n * fwd.enc.dim];
        self.encoder
            .backward(&fwd.enc, &dh, Some(&dpooled), &mut grad.encoder);
        Ok(loss)
    }

    pub fn sgd_step(&mut self, grad: &CtrGrad, lr: f64) {
        self.encoder.sgd_step(&grad.encoder, lr);
        self.ad_head.sgd_step(&grad.ad_head, lr);
        if !self.aspects.is_none() {
            self.aspect_head.sgd_step(&grad.aspect_head, lr);
        }
        self.out.sgd_step(&grad.out, lr);
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.encoder.write_params(out);
        self.ad_head.write_params(out);
        self.aspect_head.write_params(out);
        self.out.write_params(out);
    }

    pub fn read_params(&mut self, cursor: &mut ParamCursor) {
        self.encoder.read_params(cursor);
        self.ad_head.read_params(cursor);
        self.aspect_head.read_params(cursor);
        self.out.read_params(cursor);
    }
}

/// Gradient accumulator shaped like [`CtrModel`].
#[derive(Debug, Clone)]
pub struct CtrGrad {
    pub encoder: EncoderGrad,
    pub ad_head: AffineGrad,
    pub aspect_head: AffineGrad,
    pub out: AffineGrad,
}

impl CtrGrad {
    pub fn zeros_like(model: &CtrModel) -> Self {
        CtrGrad {
            encoder: EncoderGrad::zeros_like(&model.encoder),
            ad_head: AffineGrad::zeros_like(&model.ad_head),
            aspect_head: AffineGrad::zeros_like(&model.aspect_head),
            out: AffineGrad::zeros_like(&model.out),
        }
    }

    pub fn clear(&mut self) {
        self.encoder.clear();
        self.ad_head.clear();
        self.aspect_head.clear();
        self.out.clear();
    }

    pub fn write_params(&self, model: &CtrModel, out: &mut Vec<f64>) {
        self.encoder.write_params(&model.encoder, out);
        self.ad_head.write_params(out);
        self.aspect_head.write_params(out);
        self.out.write_params(out);
    }
}

/// Weighted mean squared error over a set (weights follow the model's
/// impression-weighting setting).
pub fn ctr_dev_loss(model: &CtrModel, examples: &[CtrExample]) -> Result<f64> {
    let by_imps = model.config.weight_by_impressions;
    let mut num = 0.0;
    let mut den = 0.0;
    for ex in examples {
        let w = ex.weight(by_imps);
        num += w * model.loss(ex)?;
        den += w;
    }
    Ok(num / den.max(1.0))
}

/// Trains the CTR model in place; it ends at the best-dev checkpoint.
pub fn train_ctr(
    model: &mut CtrModel,
    train: &[CtrExample],
    dev: &[CtrExample],
    config: &TrainConfig,
) -> Result<TrainLog> {
    assert!(!train.is_empty(), "training set must be non-empty");
    if dev.is_empty() {
        log::warn!("empty dev set: early stopping will track the train loss");
    }
    let by_imps = model.config.weight_by_impressions;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best = model.clone();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_loss: f64::INFINITY,
    };
    let mut grad = CtrGrad::zeros_like(model);

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut num = 0.0;
        let mut den = 0.0;
        for batch in order.chunks(config.batch_size) {
            let batch_weight: f64 = batch.iter().map(|&i| train[i].weight(by_imps)).sum();
            grad.clear();
            for &i in batch {
                let ex = &train[i];
                let w = ex.weight(by_imps);
                let loss = model.grad_step(ex, w / batch_weight, &mut grad)?;
                num += w * loss;
                den += w;
            }
            model.sgd_step(&grad, config.lr);
        }
        let train_loss = num / den.max(1.0);
        let dev_loss = if dev.is_empty() {
            train_loss
        } else {
            ctr_dev_loss(model, dev)?
        };
        let decision = stopper.observe(epoch, dev_loss);
        if decision.improved {
            best = model.clone();
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            improved: decision.improved,
        });
        log::info!(
            "ctr epoch {epoch}: train={train_loss:.6} dev={dev_loss:.6}{}",
            if decision.improved { " *" } else { "" }
        );
        if decision.stop {
            break;
        }
    }
    *model = best;
    log.best_epoch = stopper.best_epoch();
    log.best_dev_loss = stopper.best_loss();
    Ok(log)
}

/// How examples become positive/negative units for ranking evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AucMode {
    /// Each example contributes `clicks` positives and
    /// `impressions - clicks` negatives.
    Expansion,
    /// Each example is one unit, positive when its CTR exceeds the set's
    /// median CTR.
    MedianBinarize,
}

/// Ranking and error metrics for a prediction set. `auc` is `None` when
/// one of the classes is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrEval {
    pub n_examples: usize,
    pub auc_mode: AucMode,
    pub auc: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
}

/// Scores the model over a prediction set.
pub fn evaluate_ctr(model: &CtrModel, examples: &[CtrExample], mode: AucMode) -> Result<CtrEval> {
    if examples.is_empty() {
        return Err(Error::invalid("cannot evaluate over an empty example set"));
    }
    let mut preds = Vec::with_capacity(examples.len());
    let mut truth = Vec::with_capacity(examples.len());
    for ex in examples {
        preds.push(model.predict(ex)?);
        truth.push(ex.ctr());
    }

    let items: Vec<AucItem> = match mode {
        AucMode::Expansion => examples
            .iter()
            .zip(&preds)
            .map(|(ex, &p)| AucItem {
                score: p,
                positives: ex.clicks,
                negatives: ex.impressions - ex.clicks,
            })
            .collect(),
        AucMode::MedianBinarize => {
            let mut sorted = truth.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
            truth
                .iter()
                .zip(&preds)
                .map(|(&y, &p)| AucItem {
                    score: p,
                    positives: (y > median) as u64,
                    negatives: (y <= median) as u64,
                })
                .collect()
        }
    };
    let auc = match weighted_auc(&items) {
        Ok(a) => Some(a),
        Err(Error::Undefined(reason)) => {
            log::warn!("AUC undefined: {reason}");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(CtrEval {
        n_examples: examples.len(),
        auc_mode: mode,
        auc,
        rmse: rmse(&preds, &truth)?,
        mae: mae(&preds, &truth)?,
    })
}
