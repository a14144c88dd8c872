//! Evaluation of span- and document-level appeal predictions: exact-match
//! span detection, per-label precision/recall/F1, and macro averages over
//! the labels that actually occur in the gold data.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotation::GoldDocument;
use crate::aspects::{DocClassifierModel, SpanPrediction, SpanTaggerModel};
use crate::error::{Error, Result};
use crate::metrics::Counts;
use crate::taxonomy::{LabelVector, Taxonomy, NUM_LABELS};

/// Where span boundaries come from during span evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Boundaries decoded by the model.
    Pred,
    /// Gold boundaries; only the label assignment is evaluated.
    Oracle,
}

/// Scores for a single label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: u8,
    pub name: String,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of gold occurrences (`tp + fn`).
    pub support: u64,
}

fn label_scores(per_label: &BTreeMap<u8, Counts>) -> Vec<LabelScore> {
    let taxonomy = Taxonomy::builtin();
    (1..=NUM_LABELS as u8)
        .map(|label| {
            let counts = per_label.get(&label).copied().unwrap_or_default();
            LabelScore {
                label,
                name: taxonomy.get(label).name.clone(),
                counts,
                precision: counts.precision(),
                recall: counts.recall(),
                f1: counts.f1(),
                support: counts.tp + counts.fn_,
            }
        })
        .collect()
}

/// Macro-F1 over labels with gold support; `None` when no label has any.
fn macro_f1_active(scores: &[LabelScore]) -> Option<f64> {
    let active: Vec<&LabelScore> = scores.iter().filter(|s| s.support > 0).collect();
    if active.is_empty() {
        return None;
    }
    Some(active.iter().map(|s| s.f1).sum::<f64>() / active.len() as f64)
}

fn micro_counts(per_label: &BTreeMap<u8, Counts>) -> Counts {
    let mut total = Counts::default();
    for c in per_label.values() {
        total.add(*c);
    }
    total
}

/// Span evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanEvalReport {
    pub mode: EvalMode,
    pub n_docs: usize,
    /// Boundary detection alone: exact `(start, end)` match, labels ignored.
    pub detection: Counts,
    pub detection_f1: f64,
    /// Exact `(start, end, label)` matches per label.
    pub per_label: Vec<LabelScore>,
    /// Macro-F1 over labels with gold support.
    pub macro_f1: Option<f64>,
    pub micro_f1: f64,
}

/// Document-level evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEvalReport {
    pub n_docs: usize,
    pub per_label: Vec<LabelScore>,
    pub macro_f1: Option<f64>,
    pub micro_f1: f64,
}

fn pred_triples(preds: &[SpanPrediction]) -> BTreeSet<(usize, usize, u8)> {
    let mut set = BTreeSet::new();
    for p in preds {
        for &(label, _) in &p.labels {
            set.insert((p.start, p.end, label));
        }
    }
    set
}

fn gold_triples(doc: &GoldDocument) -> BTreeSet<(usize, usize, u8)> {
    let mut set = BTreeSet::new();
    for s in &doc.spans {
        for &label in &s.labels {
            set.insert((s.start, s.end, label));
        }
    }
    set
}

/// Scores span predictions (keyed by `doc_id`) against gold documents.
/// Documents without predictions count all their gold spans as misses;
/// predictions for unknown documents are an error.
pub fn evaluate_span_predictions(
    golds: &[GoldDocument],
    preds: &[(String, Vec<SpanPrediction>)],
    mode: EvalMode,
) -> Result<SpanEvalReport> {
    let gold_ids: BTreeSet<&str> = golds.iter().map(|d| d.doc_id.as_str()).collect();
    let mut by_id: BTreeMap<&str, &[SpanPrediction]> = BTreeMap::new();
    for (id, spans) in preds {
        if !gold_ids.contains(id.as_str()) {
            return Err(Error::invalid(format!(
                "predictions reference unknown doc_id {id:?}"
            )));
        }
        if by_id.insert(id.as_str(), spans).is_some() {
            return Err(Error::invalid(format!(
                "duplicate predictions for doc_id {id:?}"
            )));
        }
    }

    let empty: &[SpanPrediction] = &[];
    let mut detection = Counts::default();
    let mut per_label: BTreeMap<u8, Counts> = BTreeMap::new();
    let mut missing = 0usize;
    for doc in golds {
        let doc_preds = match by_id.get(doc.doc_id.as_str()) {
            Some(p) => *p,
            None => {
                missing += 1;
                empty
            }
        };
        let gold_bounds: BTreeSet<(usize, usize)> =
            doc.spans.iter().map(|s| (s.start, s.end)).collect();
        let pred_bounds: BTreeSet<(usize, usize)> =
            doc_preds.iter().map(|p| (p.start, p.end)).collect();
        detection.tp += gold_bounds.intersection(&pred_bounds).count() as u64;
        detection.fp += pred_bounds.difference(&gold_bounds).count() as u64;
        detection.fn_ += gold_bounds.difference(&pred_bounds).count() as u64;

        let gold_t = gold_triples(doc);
        let pred_t = pred_triples(doc_preds);
        for &(_, _, label) in gold_t.intersection(&pred_t) {
            per_label.entry(label).or_default().tp += 1;
        }
        for &(_, _, label) in pred_t.difference(&gold_t) {
            per_label.entry(label).or_default().fp += 1;
        }
        for &(_, _, label) in gold_t.difference(&pred_t) {
            per_label.entry(label).or_default().fn_ += 1;
        }
    }
    if missing > 0 {
        log::warn!("{missing} gold document(s) had no predictions");
    }

    let scores = label_scores(&per_label);
    let macro_f1 = macro_f1_active(&scores);
    let micro = micro_counts(&per_label);
    Ok(SpanEvalReport {
        mode,
        n_docs: golds.len(),
        detection,
        detection_f1: detection.f1(),
        per_label: scores,
        macro_f1,
        micro_f1: micro.f1(),
    })
}

/// Runs the span model over the gold documents and scores it. In
/// [`EvalMode::Oracle`] the model classifies the gold boundaries instead of
/// decoding its own.
pub fn evaluate_span_model(
    model: &SpanTaggerModel,
    golds: &[GoldDocument],
    mode: EvalMode,
) -> Result<SpanEvalReport> {
    let mut preds = Vec::with_capacity(golds.len());
    for doc in golds {
        let spans = match mode {
            EvalMode::Pred => model.predict(&doc.text)?,
            EvalMode::Oracle => {
                let bounds: Vec<(usize, usize)> =
                    doc.spans.iter().map(|s| (s.start, s.end)).collect();
                model.predict_with_boundaries(&doc.text, &bounds)?
            }
        };
        preds.push((doc.doc_id.clone(), spans));
    }
    evaluate_span_predictions(golds, &preds, mode)
}

/// Scores document-level label sets (keyed by `doc_id`) against the gold
/// label unions.
pub fn evaluate_doc_predictions(
    golds: &[GoldDocument],
    preds: &[(String, Vec<u8>)],
) -> Result<DocEvalReport> {
    let gold_ids: BTreeSet<&str> = golds.iter().map(|d| d.doc_id.as_str()).collect();
    let mut by_id: BTreeMap<&str, &[u8]> = BTreeMap::new();
    for (id, labels) in preds {
        if !gold_ids.contains(id.as_str()) {
            return Err(Error::invalid(format!(
                "predictions reference unknown doc_id {id:?}"
            )));
        }
        if by_id.insert(id.as_str(), labels).is_some() {
            return Err(Error::invalid(format!(
                "duplicate predictions for doc_id {id:?}"
            )));
        }
    }

    let mut per_label: BTreeMap<u8, Counts> = BTreeMap::new();
    let mut missing = 0usize;
    for doc in golds {
        let pred_labels: BTreeSet<u8> = match by_id.get(doc.doc_id.as_str()) {
            Some(l) => l.iter().copied().collect(),
            None => {
                missing += 1;
                BTreeSet::new()
            }
        };
        let gold_labels: BTreeSet<u8> = doc
            .doc_labels()
            .indices_at(0.5)
            .into_iter()
            .collect();
        for &label in gold_labels.intersection(&pred_labels) {
            per_label.entry(label).or_default().tp += 1;
        }
        for &label in pred_labels.difference(&gold_labels) {
            per_label.entry(label).or_default().fp += 1;
        }
        for &label in gold_labels.difference(&pred_labels) {
            per_label.entry(label).or_default().fn_ += 1;
        }
    }
    if missing > 0 {
        log::warn!("{missing} gold document(s) had no predictions");
    }

    let scores = label_scores(&per_label);
    let macro_f1 = macro_f1_active(&scores);
    let micro = micro_counts(&per_label);
    Ok(DocEvalReport {
        n_docs: golds.len(),
        per_label: scores,
        macro_f1,
        micro_f1: micro.f1(),
    })
}

/// Runs the document classifier over the gold documents and scores the
/// label sets it selects.
pub fn evaluate_doc_model(
    model: &DocClassifierModel,
    golds: &[GoldDocument],
) -> Result<DocEvalReport> {
    let mut preds = Vec::with_capacity(golds.len());
    for doc in golds {
        let p = model.predict(&doc.text)?;
        preds.push((doc.doc_id.clone(), p.labels.iter().map(|&(l, _)| l).collect()));
    }
    evaluate_doc_predictions(golds, &preds)
}

/// Adds each fine label's coarse group to a label set (used by the
/// hierarchy-closure evaluation option).
pub fn close_label_set(labels: &[u8]) -> Vec<u8> {
    let mut v = LabelVector::from_indices(labels.iter().copied());
    v = v.close_hierarchy(Taxonomy::builtin());
    v.indices_at(0.5)
}
