//! Span annotations: triple-annotator adjudication, inter-annotator
//! agreement statistics, and the BIOE tag codec used by the span tagger.
//!
//! Offsets are character offsets (Unicode scalar values) with exclusive
//! ends. Label sets are stored as sorted, deduplicated 1-based indices.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_jsonl};
use crate::taxonomy::{LabelVector, Taxonomy};
use crate::text::char_len;

/// A labeled character span. `end` is exclusive; `labels` holds sorted
/// unique 1-based label indices and is never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
    pub labels: Vec<u8>,
}

impl SpanAnnotation {
    pub fn new(start: usize, end: usize, labels: impl IntoIterator<Item = u8>) -> Result<Self> {
        if start >= end {
            return Err(Error::invalid(format!(
                "span must satisfy start < end, got ({start}, {end})"
            )));
        }
        let set: BTreeSet<u8> = labels.into_iter().collect();
        if set.is_empty() {
            return Err(Error::invalid(format!(
                "span ({start}, {end}) has no labels"
            )));
        }
        if let Some(&bad) = set.iter().find(|&&l| !(1..=crate::taxonomy::NUM_LABELS as u8).contains(&l)) {
            return Err(Error::invalid(format!("label index {bad} out of range")));
        }
        Ok(SpanAnnotation {
            start,
            end,
            labels: set.into_iter().collect(),
        })
    }

    pub fn label_vector(&self) -> LabelVector {
        LabelVector::from_indices(self.labels.iter().copied())
    }
}

/// One annotator's spans for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorRecord {
    pub doc_id: String,
    pub annotator_id: String,
    pub spans: Vec<SpanAnnotation>,
}

/// An adjudicated document: text plus consensus spans, sorted by start and
/// non-overlapping.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldDocument {
    pub doc_id: String,
    pub text: String,
    pub spans: Vec<SpanAnnotation>,
    pub industry: String,
}

impl GoldDocument {
    /// Document-level labels: the union of all span label sets.
    pub fn doc_labels(&self) -> LabelVector {
        let mut v = LabelVector::zeros();
        for span in &self.spans {
            v = v.union(&span.label_vector());
        }
        v
    }
}

/// Sorts spans by start and errors if any two overlap.
fn validate_spans(doc_id: &str, spans: &mut Vec<SpanAnnotation>) -> Result<()> {
    spans.sort_by_key(|s| (s.start, s.end));
    for pair in spans.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::OverlappingSpans {
                doc_id: doc_id.to_string(),
                a: (pair[0].start, pair[0].end),
                b: (pair[1].start, pair[1].end),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Wire formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SpanWire {
    start: usize,
    end: usize,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AnnotatorWire {
    doc_id: String,
    annotator_id: String,
    spans: Vec<SpanWire>,
}

#[derive(Serialize, Deserialize)]
struct GoldWire {
    doc_id: String,
    text: String,
    spans: Vec<SpanWire>,
    industry: String,
}

fn span_from_wire(wire: SpanWire, taxonomy: &Taxonomy) -> Result<SpanAnnotation> {
    let mut labels = Vec::with_capacity(wire.labels.len());
    for name in &wire.labels {
        labels.push(taxonomy.resolve(name)?.index);
    }
    SpanAnnotation::new(wire.start, wire.end, labels)
}

fn span_to_wire(span: &SpanAnnotation, taxonomy: &Taxonomy) -> SpanWire {
    SpanWire {
        start: span.start,
        end: span.end,
        labels: span.labels.iter().map(|&l| taxonomy.get(l).name.clone()).collect(),
    }
}

/// Reads annotator records (`{"doc_id","annotator_id","spans":[...]}`),
/// validating label names and per-annotator span overlap.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotatorRecord>> {
    let taxonomy = Taxonomy::builtin();
    let wires: Vec<AnnotatorWire> = read_jsonl(path)?;
    let mut out = Vec::with_capacity(wires.len());
    for wire in wires {
        let mut spans = wire
            .spans
            .into_iter()
            .map(|s| span_from_wire(s, taxonomy))
            .collect::<Result<Vec<_>>>()?;
        validate_spans(&wire.doc_id, &mut spans)?;
        out.push(AnnotatorRecord {
            doc_id: wire.doc_id,
            annotator_id: wire.annotator_id,
            spans,
        });
    }
    Ok(out)
}

/// Reads gold documents, checking span bounds against the text length.
pub fn read_gold(path: &Path) -> Result<Vec<GoldDocument>> {
    let taxonomy = Taxonomy::builtin();
    let wires: Vec<GoldWire> = read_jsonl(path)?;
    let mut out = Vec::with_capacity(wires.len());
    for wire in wires {
        let mut spans = wire
            .spans
            .into_iter()
            .map(|s| span_from_wire(s, taxonomy))
            .collect::<Result<Vec<_>>>()?;
        validate_spans(&wire.doc_id, &mut spans)?;
        let len = char_len(&wire.text);
        if let Some(span) = spans.iter().find(|s| s.end > len) {
            return Err(Error::invalid(format!(
                "doc `{}`: span ({}, {}) exceeds text length {len}",
                wire.doc_id, span.start, span.end
            )));
        }
        out.push(GoldDocument {
            doc_id: wire.doc_id,
            text: wire.text,
            spans,
            industry: wire.industry,
        });
    }
    Ok(out)
}

/// Writes gold documents (`{"doc_id","text","spans","industry"}` per line).
pub fn write_gold(path: &Path, docs: &[GoldDocument]) -> Result<()> {
    let taxonomy = Taxonomy::builtin();
    let wires: Vec<GoldWire> = docs
        .iter()
        .map(|d| GoldWire {
            doc_id: d.doc_id.clone(),
            text: d.text.clone(),
            spans: d.spans.iter().map(|s| span_to_wire(s, taxonomy)).collect(),
            industry: d.industry.clone(),
        })
        .collect();
    write_jsonl(path, &wires)
}

// ---------------------------------------------------------------------------
// Adjudication
// ---------------------------------------------------------------------------

/// Merges exactly three annotators' spans for one document into consensus
/// spans: a span survives when at least two annotators marked the exact
/// same (start, end), and it keeps the labels assigned by at least two of
/// those markers. Spans whose surviving label set is empty are dropped.
pub fn adjudicate(records: &[AnnotatorRecord]) -> Result<Vec<SpanAnnotation>> {
    if records.len() != 3 {
        return Err(Error::invalid(format!(
            "adjudication requires exactly 3 annotator records, got {}",
            records.len()
        )));
    }
    let doc_id = &records[0].doc_id;
    if records.iter().any(|r| &r.doc_id != doc_id) {
        return Err(Error::invalid(
            "adjudication records must cover the same document".to_string(),
        ));
    }
    let mut votes: BTreeMap<(usize, usize), Vec<&[u8]>> = BTreeMap::new();
    for record in records {
        for span in &record.spans {
            votes
                .entry((span.start, span.end))
                .or_default()
                .push(&span.labels);
        }
    }
    let mut gold = Vec::new();
    for ((start, end), label_sets) in votes {
        if label_sets.len() < 2 {
            continue;
        }
        let mut tally: BTreeMap<u8, usize> = BTreeMap::new();
        for labels in &label_sets {
            for &label in *labels {
                *tally.entry(label).or_insert(0) += 1;
            }
        }
        let surviving: Vec<u8> = tally
            .into_iter()
            .filter(|(_, votes)| *votes >= 2)
            .map(|(label, _)| label)
            .collect();
        if !surviving.is_empty() {
            gold.push(SpanAnnotation::new(start, end, surviving)?);
        }
    }
    // Majority spans from non-overlapping per-annotator input cannot
    // overlap (two overlapping spans would need four markings from three
    // annotators), but the invariant is cheap to enforce.
    validate_spans(doc_id, &mut gold)?;
    Ok(gold)
}

// ---------------------------------------------------------------------------
// Agreement statistics
// ---------------------------------------------------------------------------

/// Pooled 2x2 token contingency table between two annotators, where a token
/// is "inside" when any span covers it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgreementCounts {
    pub both_inside: u64,
    pub a_only: u64,
    pub b_only: u64,
    pub both_outside: u64,
}

impl AgreementCounts {
    pub fn add(&mut self, other: AgreementCounts) {
        self.both_inside += other.both_inside;
        self.a_only += other.a_only;
        self.b_only += other.b_only;
        self.both_outside += other.both_outside;
    }

    pub fn total(&self) -> u64 {
        self.both_inside + self.a_only + self.b_only + self.both_outside
    }
}

fn coverage(spans: &[SpanAnnotation], text_len: usize, label: Option<u8>) -> Vec<bool> {
    let mut inside = vec![false; text_len];
    for span in spans {
        if label.is_some_and(|l| !span.labels.contains(&l)) {
            continue;
        }
        for slot in inside.iter_mut().take(span.end.min(text_len)).skip(span.start) {
            *slot = true;
        }
    }
    inside
}

/// Token-level contingency counts for one document. With `label` set, only
/// spans carrying that label count as "inside".
pub fn agreement_counts(
    a: &[SpanAnnotation],
    b: &[SpanAnnotation],
    text_len: usize,
    label: Option<u8>,
) -> AgreementCounts {
    let ca = coverage(a, text_len, label);
    let cb = coverage(b, text_len, label);
    let mut counts = AgreementCounts::default();
    for i in 0..text_len {
        match (ca[i], cb[i]) {
            (true, true) => counts.both_inside += 1,
            (true, false) => counts.a_only += 1,
            (false, true) => counts.b_only += 1,
            (false, false) => counts.both_outside += 1,
        }
    }
    counts
}

/// Cohen's kappa over a pooled token contingency table. `None` when chance
/// agreement is 1 (both annotators constant in the same direction), where
/// kappa is undefined.
pub fn cohen_kappa(counts: &AgreementCounts) -> Option<f64> {
    let n = counts.total();
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let po = (counts.both_inside + counts.both_outside) as f64 / n;
    let pa = (counts.both_inside + counts.a_only) as f64 / n;
    let pb = (counts.both_inside + counts.b_only) as f64 / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (1.0 - pe).abs() < 1e-15 {
        return None;
    }
    Some((po - pe) / (1.0 - pe))
}

/// Pooled binary token kappa across documents: each entry pairs both
/// annotators' spans with the document's token count.
pub fn token_kappa(docs: &[(&[SpanAnnotation], &[SpanAnnotation], usize)]) -> Option<f64> {
    let mut pooled = AgreementCounts::default();
    for (a, b, text_len) in docs {
        pooled.add(agreement_counts(a, b, *text_len, None));
    }
    cohen_kappa(&pooled)
}

/// Pairwise span F1 between two annotators pooled over documents. A span
/// matches only on exact (start, end) and an exactly equal label set.
/// Symmetric in its arguments; 0/0 is reported as 0.
pub fn pairwise_span_f1(docs: &[(&[SpanAnnotation], &[SpanAnnotation])]) -> f64 {
    let mut tp = 0u64;
    let mut a_total = 0u64;
    let mut b_total = 0u64;
    for (a, b) in docs {
        a_total += a.len() as u64;
        b_total += b.len() as u64;
        for span in *a {
            if b.iter().any(|other| {
                other.start == span.start && other.end == span.end && other.labels == span.labels
            }) {
                tp += 1;
            }
        }
    }
    crate::metrics::Counts::new(tp, a_total - tp, b_total - tp).f1()
}

// ---------------------------------------------------------------------------
// BIOE codec
// ---------------------------------------------------------------------------

/// Per-token boundary tags. The declaration order `B < I < O < E` is the
/// tie-break order used by the span decoder's argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
    E,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::B, Tag::I, Tag::O, Tag::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Tag {
        Tag::ALL[index]
    }
}

/// Encodes non-overlapping spans as one tag per token: a length-1 span is a
/// lone `B`; longer spans are `B I ... I E`. Errors on out-of-bounds or
/// overlapping spans.
pub fn bioe_encode(spans: &[SpanAnnotation], len: usize) -> Result<Vec<Tag>> {
    let mut sorted: Vec<&SpanAnnotation> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    let mut tags = vec![Tag::O; len];
    let mut prev: Option<&SpanAnnotation> = None;
    for span in sorted {
        if span.end > len {
            return Err(Error::invalid(format!(
                "span ({}, {}) exceeds sequence length {len}",
                span.start, span.end
            )));
        }
        if let Some(p) = prev {
            if span.start < p.end {
                return Err(Error::OverlappingSpans {
                    doc_id: String::new(),
                    a: (p.start, p.end),
                    b: (span.start, span.end),
                });
            }
        }
        if span.end - span.start == 1 {
            tags[span.start] = Tag::B;
        } else {
            tags[span.start] = Tag::B;
            for tag in tags.iter_mut().take(span.end - 1).skip(span.start + 1) {
                *tag = Tag::I;
            }
            tags[span.end - 1] = Tag::E;
        }
        prev = Some(span);
    }
    Ok(tags)
}

/// Decodes a raw tag sequence into (start, end) spans, repairing invalid
/// sequences instead of failing: a span opens at `B` and extends through
/// `I`; `E` closes it inclusively; any other tag closes it just past the
/// last `I` (a lone `B` becomes a length-1 span). `I`/`E` outside an open
/// span are ignored. Total decode: never errors.
pub fn bioe_decode(tags: &[Tag]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    // (start, index of the last tag in the contiguous B/I run)
    let mut open: Option<(usize, usize)> = None;
    let mut repairs = 0usize;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            Tag::B => {
                if let Some((start, last)) = open.take() {
                    spans.push((start, last + 1));
                    repairs += 1;
                }
                open = Some((i, i));
            }
            Tag::I => {
                if let Some((_, last)) = open.as_mut() {
                    *last = i;
                } else {
                    repairs += 1;
                }
            }
            Tag::E => {
                if let Some((start, _)) = open.take() {
                    spans.push((start, i + 1));
                } else {
                    repairs += 1;
                }
            }
            Tag::O => {
                if let Some((start, last)) = open.take() {
                    spans.push((start, last + 1));
                    repairs += 1;
                }
            }
        }
    }
    if let Some((start, last)) = open {
        spans.push((start, last + 1));
        repairs += 1;
    }
    if repairs > 0 {
        log::debug!("bioe_decode repaired {repairs} malformed tag transitions");
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span(start: usize, end: usize, labels: &[u8]) -> SpanAnnotation {
        SpanAnnotation::new(start, end, labels.iter().copied()).unwrap()
    }

    fn annotator(id: &str, spans: Vec<SpanAnnotation>) -> AnnotatorRecord {
        AnnotatorRecord {
            doc_id: "doc1".into(),
            annotator_id: id.into(),
            spans,
        }
    }

    #[test]
    fn span_labels_are_sorted_and_deduped() {
        let s = span(0, 3, &[15, 4, 4]);
        assert_eq!(s.labels, vec![4, 15]);
        assert!(SpanAnnotation::new(3, 3, [1u8]).is_err());
        assert!(SpanAnnotation::new(0, 2, std::iter::empty()).is_err());
        assert!(SpanAnnotation::new(0, 2, [22u8]).is_err());
    }

    #[test]
    fn adjudication_keeps_unanimous_spans() {
        let records = vec![
            annotator("a", vec![span(0, 5, &[4])]),
            annotator("b", vec![span(0, 5, &[4])]),
            annotator("c", vec![span(0, 5, &[4])]),
        ];
        let gold = adjudicate(&records).unwrap();
        assert_eq!(gold, vec![span(0, 5, &[4])]);
    }

    #[test]
    fn adjudication_drops_minority_spans_and_labels() {
        // Span (0,5): marked by a and b; label 4 has two votes, label 5 one.
        // Span (7,9): marked only by c.
        let records = vec![
            annotator("a", vec![span(0, 5, &[4, 5])]),
            annotator("b", vec![span(0, 5, &[4])]),
            annotator("c", vec![span(7, 9, &[13])]),
        ];
        let gold = adjudicate(&records).unwrap();
        assert_eq!(gold, vec![span(0, 5, &[4])]);
    }

    #[test]
    fn adjudication_drops_spans_without_label_majority() {
        // Two annotators agree on the boundaries but not on any label.
        let records = vec![
            annotator("a", vec![span(0, 5, &[4])]),
            annotator("b", vec![span(0, 5, &[13])]),
            annotator("c", vec![]),
        ];
        assert!(adjudicate(&records).unwrap().is_empty());
    }

    #[test]
    fn adjudication_requires_exactly_three_records() {
        let records = vec![annotator("a", vec![]), annotator("b", vec![])];
        assert!(adjudicate(&records).is_err());
    }

    #[test]
    fn adjudication_is_order_invariant() {
        let records = vec![
            annotator("a", vec![span(0, 5, &[4]), span(8, 12, &[13, 14])]),
            annotator("b", vec![span(8, 12, &[13])]),
            annotator("c", vec![span(0, 5, &[4])]),
        ];
        let expected = adjudicate(&records).unwrap();
        let mut rotated = records.clone();
        rotated.rotate_left(1);
        assert_eq!(adjudicate(&rotated).unwrap(), expected);
        rotated.rotate_left(1);
        assert_eq!(adjudicate(&rotated).unwrap(), expected);
    }

    #[test]
    fn kappa_identical_spans_is_one() {
        let a = vec![span(2, 6, &[4])];
        let k = token_kappa(&[(&a, &a.clone(), 10)]).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_complementary_halves_is_minus_one() {
        let a = vec![span(0, 5, &[4])];
        let b = vec![span(5, 10, &[4])];
        let k = token_kappa(&[(&a, &b, 10)]).unwrap();
        assert!((k + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_undefined_when_chance_agreement_is_one() {
        // Both annotators mark nothing: p_e = 1.
        assert_eq!(token_kappa(&[(&[], &[], 10)]), None);
        // Both annotators mark everything.
        let a = vec![span(0, 10, &[4])];
        assert_eq!(token_kappa(&[(&a, &a.clone(), 10)]), None);
    }

    #[test]
    fn kappa_pools_across_documents() {
        let a1 = vec![span(0, 3, &[4])];
        let b1 = vec![span(0, 3, &[4])];
        let a2 = vec![span(0, 2, &[4])];
        let b2: Vec<SpanAnnotation> = vec![];
        let pooled = token_kappa(&[(&a1, &b1, 6), (&a2, &b2, 6)]).unwrap();
        // Pooled table: n11=3, n10=2, n01=0, n00=7.
        let expected = {
            let po = 10.0 / 12.0;
            let pa = 5.0 / 12.0;
            let pb = 3.0 / 12.0;
            let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
            (po - pe) / (1.0 - pe)
        };
        assert!((pooled - expected).abs() < 1e-12);
    }

    #[test]
    fn per_label_counts_ignore_other_labels() {
        let a = vec![span(0, 4, &[4])];
        let b = vec![span(0, 4, &[13])];
        let counts = agreement_counts(&a, &b, 8, Some(4));
        assert_eq!(counts.both_inside, 0);
        assert_eq!(counts.a_only, 4);
        assert_eq!(counts.b_only, 0);
    }

    #[test]
    fn pairwise_f1_exact_match_and_symmetry() {
        let a = vec![span(0, 4, &[4]), span(6, 9, &[13])];
        let b = vec![span(0, 4, &[4]), span(6, 9, &[14])];
        let f = pairwise_span_f1(&[(&a, &b)]);
        assert!((f - 0.5).abs() < 1e-12);
        let f_rev = pairwise_span_f1(&[(&b, &a)]);
        assert!((f - f_rev).abs() < 1e-12);
        // Label-set mismatch is a miss even with identical offsets.
        let c = vec![span(0, 4, &[4, 5])];
        let d = vec![span(0, 4, &[4])];
        assert_eq!(pairwise_span_f1(&[(&c, &d)]), 0.0);
        assert_eq!(pairwise_span_f1(&[(&[], &[])]), 0.0);
    }

    #[test]
    fn bioe_encode_examples() {
        let tags = bioe_encode(&[span(0, 4, &[4])], 6).unwrap();
        assert_eq!(tags, vec![Tag::B, Tag::I, Tag::I, Tag::E, Tag::O, Tag::O]);
        let tags = bioe_encode(&[span(2, 3, &[4])], 4).unwrap();
        assert_eq!(tags, vec![Tag::O, Tag::O, Tag::B, Tag::O]);
        assert_eq!(bioe_encode(&[], 3).unwrap(), vec![Tag::O; 3]);
        assert!(bioe_encode(&[span(0, 9, &[4])], 5).is_err());
        let overlapping = [span(0, 4, &[4]), span(3, 6, &[13])];
        assert!(matches!(
            bioe_encode(&overlapping, 8),
            Err(Error::OverlappingSpans { .. })
        ));
    }

    #[test]
    fn bioe_decode_repairs_malformed_sequences() {
        use Tag::*;
        assert_eq!(bioe_decode(&[B, I, E, O]), vec![(0, 3)]);
        assert_eq!(bioe_decode(&[B, O, E, O]), vec![(0, 1)]);
        assert_eq!(bioe_decode(&[O, I, I, O]), vec![]);
        assert_eq!(bioe_decode(&[B, B, E]), vec![(0, 1), (1, 3)]);
        assert_eq!(bioe_decode(&[B, I]), vec![(0, 2)]);
        assert_eq!(bioe_decode(&[E, E, B]), vec![(2, 3)]);
        assert_eq!(bioe_decode(&[]), vec![]);
    }

    proptest! {
        #[test]
        fn bioe_round_trip(raw in proptest::collection::vec((0usize..30, 1usize..6), 0..6)) {
            // Build non-overlapping spans by laying segments end to end.
            let mut spans = Vec::new();
            let mut cursor = 0usize;
            for (gap, len) in raw {
                let start = cursor + gap;
                spans.push(span(start, start + len, &[4]));
                cursor = start + len + 1;
            }
            let total = cursor.max(1) + 2;
            let tags = bioe_encode(&spans, total).unwrap();
            let decoded = bioe_decode(&tags);
            let expected: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
            prop_assert_eq!(decoded, expected);
        }

        #[test]
        fn bioe_decode_is_total(indices in proptest::collection::vec(0usize..4, 0..64)) {
            let tags: Vec<Tag> = indices.into_iter().map(Tag::from_index).collect();
            let spans = bioe_decode(&tags);
            // Spans are well-formed, in order, and non-overlapping.
            let mut prev_end = 0usize;
            for (start, end) in spans {
                prop_assert!(start < end);
                prop_assert!(start >= prev_end);
                prop_assert!(end <= tags.len());
                prev_end = end;
            }
        }

        #[test]
        fn adjudication_is_permutation_invariant(
            perm in Just(()).prop_perturb(|_, mut rng| {
                let mut idx = [0usize, 1, 2];
                for i in (1..3).rev() {
                    let j = (rng.next_u32() as usize) % (i + 1);
                    idx.swap(i, j);
                }
                idx
            })
        ) {
            let records = [
                annotator("a", vec![span(0, 5, &[4, 5]), span(8, 10, &[13])]),
                annotator("b", vec![span(0, 5, &[4])]),
                annotator("c", vec![span(8, 10, &[13]), span(12, 14, &[17])]),
            ];
            let baseline = adjudicate(&records).unwrap();
            let permuted: Vec<AnnotatorRecord> = perm.iter().map(|&i| records[i].clone()).collect();
            prop_assert_eq!(adjudicate(&permuted).unwrap(), baseline);
        }
    }
}
