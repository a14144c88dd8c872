//! On-disk formats for trained models and prediction files.
//!
//! Models are JSON envelopes `{format_version, kind, model}` so a loader
//! can tell the three model types apart before parsing the body.
//! Predictions are JSON Lines, one document per line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aspects::{DocClassifierModel, DocPrediction, SpanPrediction, SpanTaggerModel};
use crate::ctr::CtrModel;
use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_jsonl};
use crate::taxonomy::LabelVector;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format_version: u32,
    kind: String,
    model: T,
}

#[derive(Deserialize)]
struct Probe {
    format_version: u32,
    kind: String,
}

/// Any of the three trained model types.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Span(SpanTaggerModel),
    Doc(DocClassifierModel),
    Ctr(CtrModel),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Span(_) => "span",
            AnyModel::Doc(_) => "doc",
            AnyModel::Ctr(_) => "ctr",
        }
    }
}

fn write_envelope<T: Serialize>(path: &Path, kind: &str, model: &T) -> Result<()> {
    let envelope = Envelope {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        model,
    };
    let json = serde_json::to_string(&envelope)
        .map_err(|e| Error::invalid(format!("cannot serialize model: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Saves a model as a versioned JSON envelope.
pub fn save_model(path: &Path, model: &AnyModel) -> Result<()> {
    match model {
        AnyModel::Span(m) => write_envelope(path, "span", m),
        AnyModel::Doc(m) => write_envelope(path, "doc", m),
        AnyModel::Ctr(m) => write_envelope(path, "ctr", m),
    }
}

/// Loads any model file, dispatching on the envelope's `kind`.
pub fn load_model(path: &Path) -> Result<AnyModel> {
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let probe: Probe = serde_json::from_str(&json).map_err(|e| Error::Malformed {
        line: 0,
        message: format!("{}: not a model file: {e}", path.display()),
    })?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "{}: unsupported model format version {} (expected {FORMAT_VERSION})",
            path.display(),
            probe.format_version
        )));
    }
    let parse_err = |e: serde_json::Error| Error::Malformed {
        line: 0,
        message: format!("{}: malformed {} model: {e}", path.display(), probe.kind),
    };
    match probe.kind.as_str() {
        "span" => {
            let env: Envelope<SpanTaggerModel> = serde_json::from_str(&json).map_err(parse_err)?;
            Ok(AnyModel::Span(env.model))
        }
        "doc" => {
            let env: Envelope<DocClassifierModel> =
                serde_json::from_str(&json).map_err(parse_err)?;
            Ok(AnyModel::Doc(env.model))
        }
        "ctr" => {
            let env: Envelope<CtrModel> = serde_json::from_str(&json).map_err(parse_err)?;
            Ok(AnyModel::Ctr(env.model))
        }
        other => Err(Error::invalid(format!(
            "{}: unknown model kind {other:?}",
            path.display()
        ))),
    }
}

fn kind_mismatch(path: &Path, want: &str, got: &str) -> Error {
    Error::invalid(format!(
        "{}: expected a {want} model, found {got}",
        path.display()
    ))
}

pub fn load_span_model(path: &Path) -> Result<SpanTaggerModel> {
    match load_model(path)? {
        AnyModel::Span(m) => Ok(m),
        other => Err(kind_mismatch(path, "span", other.kind())),
    }
}

pub fn load_doc_model(path: &Path) -> Result<DocClassifierModel> {
    match load_model(path)? {
        AnyModel::Doc(m) => Ok(m),
        other => Err(kind_mismatch(path, "doc", other.kind())),
    }
}

pub fn load_ctr_model(path: &Path) -> Result<CtrModel> {
    match load_model(path)? {
        AnyModel::Ctr(m) => Ok(m),
        other => Err(kind_mismatch(path, "ctr", other.kind())),
    }
}

/// One predicted span on the wire; `labels` and `probs` are aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPredictionWire {
    pub start: usize,
    pub end: usize,
    pub labels: Vec<u8>,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub low_confidence: bool,
}

/// One document's span predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPredictionRecord {
    pub doc_id: String,
    pub spans: Vec<SpanPredictionWire>,
}

impl SpanPredictionRecord {
    pub fn from_predictions(doc_id: &str, preds: &[SpanPrediction]) -> Self {
        SpanPredictionRecord {
            doc_id: doc_id.to_string(),
            spans: preds
                .iter()
                .map(|p| SpanPredictionWire {
                    start: p.start,
                    end: p.end,
                    labels: p.labels.iter().map(|&(l, _)| l).collect(),
                    probs: p.labels.iter().map(|&(_, pr)| pr).collect(),
                    low_confidence: p.low_confidence,
                })
                .collect(),
        }
    }

    pub fn to_predictions(&self) -> Result<Vec<SpanPrediction>> {
        self.spans
            .iter()
            .map(|w| {
                if w.labels.len() != w.probs.len() {
                    return Err(Error::invalid(format!(
                        "doc {:?}: labels and probs differ in length",
                        self.doc_id
                    )));
                }
                Ok(SpanPrediction {
                    start: w.start,
                    end: w.end,
                    labels: w.labels.iter().copied().zip(w.probs.iter().copied()).collect(),
                    low_confidence: w.low_confidence,
                })
            })
            .collect()
    }

    /// Union of the span label bits for this document.
    pub fn doc_label_bits(&self) -> LabelVector {
        LabelVector::from_indices(self.spans.iter().flat_map(|s| s.labels.iter().copied()))
    }
}

/// One document's doc-level prediction: the labels selected at the model
/// threshold plus the full 21-entry probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocPredictionRecord {
    pub doc_id: String,
    pub labels: Vec<u8>,
    pub probs: LabelVector,
}

impl DocPredictionRecord {
    pub fn from_prediction(doc_id: &str, pred: &DocPrediction) -> Self {
        DocPredictionRecord {
            doc_id: doc_id.to_string(),
            labels: pred.labels.iter().map(|&(l, _)| l).collect(),
            probs: pred.probs,
        }
    }

    pub fn label_bits(&self) -> LabelVector {
        LabelVector::from_indices(self.labels.iter().copied())
    }
}

pub fn write_span_predictions(path: &Path, records: &[SpanPredictionRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_span_predictions(path: &Path) -> Result<Vec<SpanPredictionRecord>> {
    read_jsonl(path)
}

pub fn write_doc_predictions(path: &Path, records: &[DocPredictionRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_doc_predictions(path: &Path) -> Result<Vec<DocPredictionRecord>> {
    read_jsonl(path)
}

/// Externally computed per-token vectors for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub doc_id: String,
    pub vectors: Vec<Vec<f64>>,
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    read_jsonl(path)
}
