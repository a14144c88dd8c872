//! SGD training loops for the aspect models: minibatch gradient averaging,
//! deterministic epoch shuffles, and dev-loss early stopping with
//! best-checkpoint restore.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::GoldDocument;
use crate::aspects::{DocClassifierGrad, DocClassifierModel, SpanTaggerGrad, SpanTaggerModel};
use crate::error::Result;

/// Optimizer settings shared by all three training loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Weight of the tag-sequence likelihood term (span model only).
    pub crf_weight: f64,
    /// Weight of the span classification term (span model only).
    pub bce_weight: f64,
}

impl TrainConfig {
    pub fn span() -> Self {
        TrainConfig {
            lr: 8.6e-3,
            batch_size: 10,
            max_epochs: 10,
            patience: 3,
            seed: 0,
            crf_weight: 1.0,
            bce_weight: 1.0,
        }
    }

    pub fn doc() -> Self {
        TrainConfig {
            lr: 5.5e-3,
            ..TrainConfig::span()
        }
    }

    pub fn ctr() -> Self {
        TrainConfig {
            lr: 2.0e-3,
            ..TrainConfig::span()
        }
    }
}

/// Tracks the best dev loss seen so far and signals when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

/// What [`EarlyStopper::observe`] decided about one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    /// This epoch strictly improved on the best dev loss.
    pub improved: bool,
    /// Patience is exhausted; training should halt after this epoch.
    pub stop: bool,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records the dev loss for `epoch` (1-based). Ties do not count as
    /// improvements.
    pub fn observe(&mut self, epoch: usize, dev_loss: f64) -> StopDecision {
        if dev_loss < self.best {
            self.best = dev_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision {
                improved: true,
                stop: false,
            }
        } else {
            self.stale += 1;
            StopDecision {
                improved: false,
                stop: self.stale >= self.patience,
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// One epoch's losses as recorded in the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub improved: bool,
}

/// Full history of one training run; the model returned alongside it is
/// always the best-dev checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
}

fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Dev loss of the span objective: weighted mean sequence NLL plus weighted
/// mean per-span classification loss.
pub fn span_dev_loss(
    model: &SpanTaggerModel,
    docs: &[GoldDocument],
    config: &TrainConfig,
) -> Result<f64> {
    let mut nll_sum = 0.0;
    let mut bce_sum = 0.0;
    let mut n_spans = 0usize;
    for doc in docs {
        let parts = model.losses(&doc.text, &doc.spans)?;
        nll_sum += parts.crf_nll;
        bce_sum += parts.bce_sum;
        n_spans += parts.n_spans;
    }
    let crf_term = config.crf_weight * nll_sum / docs.len().max(1) as f64;
    let bce_term = config.bce_weight * bce_sum / n_spans.max(1) as f64;
    Ok(crf_term + bce_term)
}

/// Trains the span tagger in place; the model ends at the best-dev
/// checkpoint. With an empty dev set the train loss doubles as the
/// stopping signal.
pub fn train_span_model(
    model: &mut SpanTaggerModel,
    train: &[GoldDocument],
    dev: &[GoldDocument],
    config: &TrainConfig,
) -> Result<TrainLog> {
    assert!(!train.is_empty(), "training set must be non-empty");
    if dev.is_empty() {
        log::warn!("empty dev set: early stopping will track the train loss");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best = model.clone();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_loss: f64::INFINITY,
    };
    let mut grad = SpanTaggerGrad::zeros_like(model);

    for epoch in 1..=config.max_epochs {
        let order = shuffled_indices(train.len(), &mut rng);
        let mut nll_sum = 0.0;
        let mut bce_sum = 0.0;
        let mut n_spans_total = 0usize;
        for batch in order.chunks(config.batch_size) {
            // Batch scales: sequence term averaged over documents, span
            // term averaged over annotated spans.
            let span_count: usize = batch.iter().map(|&i| train[i].spans.len()).sum();
            let crf_scale = config.crf_weight / batch.len() as f64;
            let bce_scale = config.bce_weight / span_count.max(1) as f64;
            grad.clear();
            for &i in batch {
                let doc = &train[i];
                let parts = model.grad_step(&doc.text, &doc.spans, crf_scale, bce_scale, &mut grad)?;
                nll_sum += parts.crf_nll;
                bce_sum += parts.bce_sum;
                n_spans_total += parts.n_spans;
            }
            model.sgd_step(&grad, config.lr);
        }
        let train_loss = config.crf_weight * nll_sum / train.len() as f64
            + config.bce_weight * bce_sum / n_spans_total.max(1) as f64;
        let dev_loss = if dev.is_empty() {
            train_loss
        } else {
            span_dev_loss(model, dev, config)?
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
            "span epoch {epoch}: train={train_loss:.5} dev={dev_loss:.5}{}",
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

/// Dev loss of the document objective: mean per-document classification
/// loss against the union of span labels.
pub fn doc_dev_loss(model: &DocClassifierModel, docs: &[GoldDocument]) -> Result<f64> {
    let mut sum = 0.0;
    for doc in docs {
        sum += model.loss(&doc.text, &doc.doc_labels())?;
    }
    Ok(sum / docs.len().max(1) as f64)
}

/// Trains the document classifier in place against each document's label
/// union; the model ends at the best-dev checkpoint.
pub fn train_doc_model(
    model: &mut DocClassifierModel,
    train: &[GoldDocument],
    dev: &[GoldDocument],
    config: &TrainConfig,
) -> Result<TrainLog> {
    assert!(!train.is_empty(), "training set must be non-empty");
    if dev.is_empty() {
        log::warn!("empty dev set: early stopping will track the train loss");
    }
    let targets: Vec<_> = train.iter().map(|d| d.doc_labels()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best = model.clone();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_loss: f64::INFINITY,
    };
    let mut grad = DocClassifierGrad::zeros_like(model);

    for epoch in 1..=config.max_epochs {
        let order = shuffled_indices(train.len(), &mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            grad.clear();
            for &i in batch {
                loss_sum += model.grad_step(&train[i].text, &targets[i], scale, &mut grad)?;
            }
            model.sgd_step(&grad, config.lr);
        }
        let train_loss = loss_sum / train.len() as f64;
        let dev_loss = if dev.is_empty() {
            train_loss
        } else {
            doc_dev_loss(model, dev)?
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
            "doc epoch {epoch}: train={train_loss:.5} dev={dev_loss:.5}{}",
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
