//! The advertising-appeal label set: 21 aspect labels arranged in a shallow
//! two-level hierarchy (5 coarse groups, 16 fine labels), plus the canonical
//! industry list and the fixed-width label vector used by models.
//!
//! The label table ships as an embedded JSON asset so the same data backs the
//! library, the CLI `taxonomy` dump, and external tooling.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::levenshtein;

/// Number of aspect labels. Label indices are 1-based (`1..=21`) everywhere
/// outside of internal array storage.
pub const NUM_LABELS: usize = 21;

/// Canonical industry names. Free-form industry strings are mapped onto this
/// list case-insensitively, with `Others` as the fallback.
pub const INDUSTRIES: [&str; 13] = [
    "EC",
    "Others",
    "Media",
    "Finance",
    "VOD&eBook",
    "Cosmetics",
    "Human resources",
    "Education",
    "Travel",
    "Automobile",
    "Entertainment",
    "Real estate",
    "Beauty&Health",
];

static TAXONOMY_JSON: &str = include_str!("../data/taxonomy.json");
static BUILTIN: OnceLock<Taxonomy> = OnceLock::new();

/// Whether a label is a coarse group or a fine-grained member of one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Coarse,
    Fine,
}

/// One aspect label. Fine labels carry the index of their coarse parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectLabel {
    pub index: u8,
    pub name: String,
    pub kind: LabelKind,
    pub parent: Option<u8>,
    pub description: String,
    pub example: String,
}

/// The full label set with name/alias lookup tables.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    labels: Vec<AspectLabel>,
    by_name: HashMap<String, u8>,
}

/// Alternate names accepted by [`Taxonomy::resolve`], mapped to label indices.
const ALIASES: [(&str, u8); 5] = [
    ("performance", 16),
    ("user friendliness", 10),
    ("limited-time offer", 13),
    ("limited-target offer", 14),
    ("first-time limited offer", 15),
];

impl Taxonomy {
    /// The embedded label set. Panics only if the compiled-in asset is
    /// invalid, which the test suite rules out.
    pub fn builtin() -> &'static Taxonomy {
        BUILTIN.get_or_init(|| {
            Taxonomy::from_json(TAXONOMY_JSON).expect("embedded taxonomy asset is valid")
        })
    }

    /// Parses and validates a label set from its JSON form.
    pub fn from_json(json: &str) -> Result<Taxonomy> {
        let labels: Vec<AspectLabel> = serde_json::from_str(json)
            .map_err(|e| Error::invalid(format!("taxonomy parse: {e}")))?;
        if labels.len() != NUM_LABELS {
            return Err(Error::invalid(format!(
                "taxonomy must contain {NUM_LABELS} labels, found {}",
                labels.len()
            )));
        }
        let mut by_name = HashMap::new();
        for (pos, label) in labels.iter().enumerate() {
            if label.index as usize != pos + 1 {
                return Err(Error::invalid(format!(
                    "label at position {pos} has index {}, expected {}",
                    label.index,
                    pos + 1
                )));
            }
            match (label.kind, label.parent) {
                (LabelKind::Coarse, None) => {}
                (LabelKind::Fine, Some(parent)) => {
                    let parent_label = labels
                        .iter()
                        .find(|l| l.index == parent)
                        .ok_or_else(|| Error::invalid(format!("label {} has unknown parent {parent}", label.index)))?;
                    if parent_label.kind != LabelKind::Coarse {
                        return Err(Error::invalid(format!(
                            "label {} has fine parent {parent}",
                            label.index
                        )));
                    }
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "label {} mixes kind and parent inconsistently",
                        label.index
                    )))
                }
            }
            if by_name.insert(label.name.to_lowercase(), label.index).is_some() {
                return Err(Error::DuplicateId(label.name.clone()));
            }
        }
        for (alias, index) in ALIASES {
            by_name.entry(alias.to_string()).or_insert(index);
        }
        Ok(Taxonomy { labels, by_name })
    }

    pub fn labels(&self) -> &[AspectLabel] {
        &self.labels
    }

    /// Label by 1-based index. Panics on out-of-range indices; use
    /// [`Taxonomy::resolve`] for untrusted input.
    pub fn get(&self, index: u8) -> &AspectLabel {
        assert!(
            (1..=NUM_LABELS as u8).contains(&index),
            "label index {index} out of range"
        );
        &self.labels[index as usize - 1]
    }

    /// Looks a label up by 1-based index (given as digits), canonical name,
    /// or accepted alias; matching is case-insensitive. Unknown names fail
    /// with the nearest canonical names by edit distance.
    pub fn resolve(&self, query: &str) -> Result<&AspectLabel> {
        let q = query.trim();
        if let Ok(index) = q.parse::<u8>() {
            if (1..=NUM_LABELS as u8).contains(&index) {
                return Ok(self.get(index));
            }
            return Err(Error::UnknownLabel {
                query: query.to_string(),
                candidates: vec![format!("1..{NUM_LABELS}")],
            });
        }
        let lower = q.to_lowercase();
        if let Some(&index) = self.by_name.get(&lower) {
            return Ok(self.get(index));
        }
        let mut ranked: Vec<(usize, &str)> = self
            .labels
            .iter()
            .map(|l| (levenshtein(&lower, &l.name.to_lowercase()), l.name.as_str()))
            .collect();
        ranked.sort_by_key(|(d, name)| (*d, name.to_string()));
        Err(Error::UnknownLabel {
            query: query.to_string(),
            candidates: ranked.iter().take(3).map(|(_, n)| n.to_string()).collect(),
        })
    }

    /// Maps a label to its coarse group: fine labels return their parent,
    /// coarse labels return themselves.
    pub fn coarse_of(&self, index: u8) -> u8 {
        let label = self.get(index);
        label.parent.unwrap_or(label.index)
    }

    /// Serializes the label table to pretty JSON (the `taxonomy dump` format).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.labels).expect("taxonomy serializes")
    }
}

/// Maps a free-form industry string onto the canonical list, falling back to
/// `Others` for anything unrecognized.
pub fn canonical_industry(name: &str) -> &'static str {
    let trimmed = name.trim();
    for canonical in INDUSTRIES {
        if canonical.eq_ignore_ascii_case(trimmed) {
            return canonical;
        }
    }
    "Others"
}

/// Fixed-width vector with one slot per label, indexed by 1-based label
/// index. Entries hold either binary indicators or probabilities depending
/// on context.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelVector(pub [f64; NUM_LABELS]);

impl LabelVector {
    pub fn zeros() -> Self {
        LabelVector([0.0; NUM_LABELS])
    }

    /// Binary vector with ones at the given 1-based indices.
    pub fn from_indices<I: IntoIterator<Item = u8>>(indices: I) -> Self {
        let mut v = Self::zeros();
        for index in indices {
            v.set(index, 1.0);
        }
        v
    }

    pub fn get(&self, index: u8) -> f64 {
        assert!((1..=NUM_LABELS as u8).contains(&index));
        self.0[index as usize - 1]
    }

    pub fn set(&mut self, index: u8, value: f64) {
        assert!((1..=NUM_LABELS as u8).contains(&index));
        self.0[index as usize - 1] = value;
    }

    /// 1-based indices whose value is at least `threshold`, ascending.
    pub fn indices_at(&self, threshold: f64) -> Vec<u8> {
        (1..=NUM_LABELS as u8)
            .filter(|&i| self.get(i) >= threshold)
            .collect()
    }

    /// Index and value of the largest entry (lowest index wins ties).
    pub fn top(&self) -> (u8, f64) {
        let mut best = (1u8, self.get(1));
        for i in 2..=NUM_LABELS as u8 {
            if self.get(i) > best.1 {
                best = (i, self.get(i));
            }
        }
        best
    }

    /// Element-wise maximum; unions binary vectors.
    pub fn union(&self, other: &LabelVector) -> LabelVector {
        let mut out = *self;
        for i in 0..NUM_LABELS {
            out.0[i] = out.0[i].max(other.0[i]);
        }
        out
    }

    /// Snaps each entry to `{0, 1}` at the given threshold.
    pub fn binarize(&self, threshold: f64) -> LabelVector {
        let mut out = Self::zeros();
        for i in 0..NUM_LABELS {
            out.0[i] = if self.0[i] >= threshold { 1.0 } else { 0.0 };
        }
        out
    }

    /// Adds the coarse parent of every present fine label (hierarchy
    /// closure over a binary vector).
    pub fn close_hierarchy(&self, taxonomy: &Taxonomy) -> LabelVector {
        let mut out = *self;
        for index in self.indices_at(0.5) {
            let coarse = taxonomy.coarse_of(index);
            if out.get(coarse) < out.get(index) {
                out.set(coarse, out.get(index));
            }
        }
        out
    }
}

impl fmt::Debug for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LabelVector{:?}", self.indices_at(0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_has_21_labels_with_expected_groups() {
        let tax = Taxonomy::builtin();
        assert_eq!(tax.labels().len(), 21);
        let coarse: Vec<u8> = tax
            .labels()
            .iter()
            .filter(|l| l.kind == LabelKind::Coarse)
            .map(|l| l.index)
            .collect();
        assert_eq!(coarse, vec![1, 6, 12, 16, 20]);
        for label in tax.labels() {
            assert!(!label.description.is_empty());
            assert!(!label.example.is_empty());
        }
    }

    #[test]
    fn resolve_by_name_is_case_insensitive() {
        let tax = Taxonomy::builtin();
        let free = tax.resolve("Free").unwrap();
        assert_eq!(free.index, 4);
        assert_eq!(free.kind, LabelKind::Fine);
        assert_eq!(free.parent, Some(1));
        assert_eq!(tax.resolve("fREE").unwrap().index, 4);
        assert_eq!(tax.resolve("largest/no. 1").unwrap().index, 17);
    }

    #[test]
    fn resolve_by_index_and_alias() {
        let tax = Taxonomy::builtin();
        assert_eq!(tax.resolve("17").unwrap().name, "Largest/no. 1");
        assert_eq!(tax.resolve("Performance").unwrap().index, 16);
        assert_eq!(tax.resolve("User friendliness").unwrap().index, 10);
    }

    #[test]
    fn unknown_label_lists_candidates() {
        let tax = Taxonomy::builtin();
        let err = tax.resolve("Fee").unwrap_err();
        match err {
            Error::UnknownLabel { candidates, .. } => {
                assert!(candidates.contains(&"Free".to_string()), "{candidates:?}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn coarse_of_maps_fine_to_parent_and_is_idempotent() {
        let tax = Taxonomy::builtin();
        assert_eq!(tax.coarse_of(2), 1);
        assert_eq!(tax.coarse_of(6), 6);
        assert_eq!(tax.coarse_of(21), 20);
        for index in 1..=NUM_LABELS as u8 {
            let coarse = tax.coarse_of(index);
            assert_eq!(tax.coarse_of(coarse), coarse);
            assert_eq!(tax.get(coarse).kind, LabelKind::Coarse);
        }
    }

    #[test]
    fn label_vector_round_trip() {
        let v = LabelVector::from_indices([4u8, 15]);
        assert_eq!(v.indices_at(0.5), vec![4, 15]);
        assert_eq!(LabelVector::zeros().indices_at(0.5), Vec::<u8>::new());
    }

    #[test]
    fn hierarchy_closure_adds_parents() {
        let tax = Taxonomy::builtin();
        let v = LabelVector::from_indices([2u8]).close_hierarchy(tax);
        assert_eq!(v.indices_at(0.5), vec![1, 2]);
    }

    #[test]
    fn industry_canonicalization() {
        assert_eq!(canonical_industry("finance"), "Finance");
        assert_eq!(canonical_industry("VOD&EBOOK"), "VOD&eBook");
        assert_eq!(canonical_industry("boat rental"), "Others");
    }

    proptest! {
        #[test]
        fn vector_set_round_trip(indices in proptest::collection::btree_set(1u8..=21, 0..10)) {
            let v = LabelVector::from_indices(indices.iter().copied());
            let back: Vec<u8> = v.indices_at(0.5);
            prop_assert_eq!(back, indices.into_iter().collect::<Vec<u8>>());
        }
    }
}
