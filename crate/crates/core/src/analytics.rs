//! Aspect-to-performance analytics: per-industry point-biserial
//! correlations between predicted appeal bits and CTR, report rendering
//! (CSV and JSON), and frequency lists of the expressions behind a label.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::annotation::GoldDocument;
use crate::corpus::AdCorpus;
use crate::error::{Error, Result};
use crate::metrics::point_biserial;
use crate::taxonomy::{canonical_industry, LabelVector, Taxonomy, NUM_LABELS};

/// Correlations weaker than this are not reported as effective.
pub const EFFECTIVE_THRESHOLD: f64 = 0.25;
/// Boundary between a weak and an at-least-moderate correlation.
pub const MODERATE_THRESHOLD: f64 = 0.5;

/// One (industry, label) correlation cell. A cell is absent when the label
/// bit is constant within the industry, which leaves the coefficient
/// undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Defined { r: f64, n1: usize, n0: usize },
    Absent,
}

/// One industry's column: its case count and 21 label cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustryColumn {
    pub industry: String,
    pub cases: usize,
    pub cells: Vec<CellValue>,
}

/// The full correlation table, columns ordered by case count (descending,
/// ties by name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub min_cases: usize,
    pub industries: Vec<IndustryColumn>,
}

/// Computes the correlation table from ads and their predicted label bits
/// (matched by record id). Records without impressions or predictions are
/// skipped; industries below `min_cases` matched records are omitted.
pub fn correlate(
    corpus: &AdCorpus,
    preds: &[(String, LabelVector)],
    min_cases: usize,
) -> Result<CorrelationReport> {
    let mut by_id: BTreeMap<&str, &LabelVector> = BTreeMap::new();
    for (id, bits) in preds {
        if by_id.insert(id.as_str(), bits).is_some() {
            return Err(Error::invalid(format!("duplicate prediction for id {id:?}")));
        }
    }

    let mut groups: BTreeMap<&'static str, Vec<(LabelVector, f64)>> = BTreeMap::new();
    let mut no_ctr = 0usize;
    let mut no_pred = 0usize;
    for ad in &corpus.records {
        let Some(ctr) = ad.ctr() else {
            no_ctr += 1;
            continue;
        };
        let Some(bits) = by_id.get(ad.id.as_str()) else {
            no_pred += 1;
            continue;
        };
        groups
            .entry(canonical_industry(&ad.industry))
            .or_default()
            .push((bits.binarize(0.5), ctr));
    }
    if no_ctr > 0 {
        log::info!("skipped {no_ctr} record(s) without impressions");
    }
    if no_pred > 0 {
        log::warn!("skipped {no_pred} record(s) without predictions");
    }

    let mut columns = Vec::new();
    for (industry, rows) in &groups {
        if rows.len() < min_cases {
            log::info!(
                "industry {industry:?} has {} case(s), below the minimum {min_cases}",
                rows.len()
            );
            continue;
        }
        let ctrs: Vec<f64> = rows.iter().map(|&(_, c)| c).collect();
        let mut cells = Vec::with_capacity(NUM_LABELS);
        for label in 1..=NUM_LABELS as u8 {
            let bits: Vec<bool> = rows.iter().map(|(v, _)| v.get(label) > 0.5).collect();
            let n1 = bits.iter().filter(|&&b| b).count();
            let n0 = bits.len() - n1;
            match point_biserial(&bits, &ctrs) {
                Ok(r) => cells.push(CellValue::Defined { r, n1, n0 }),
                Err(Error::Undefined(_)) => {
                    if n0 == 0 {
                        log::debug!("label {label} is constant-1 in industry {industry:?}");
                    }
                    cells.push(CellValue::Absent);
                }
                Err(e) => return Err(e),
            }
        }
        columns.push(IndustryColumn {
            industry: industry.to_string(),
            cases: rows.len(),
            cells,
        });
    }
    columns.sort_by(|a, b| b.cases.cmp(&a.cases).then(a.industry.cmp(&b.industry)));
    Ok(CorrelationReport {
        min_cases,
        industries: columns,
    })
}

impl CorrelationReport {
    /// CSV rendering: one row per label, one column per industry,
    /// coefficients to three decimals, `-` for absent cells, and a final
    /// `#cases` row.
    pub fn to_csv(&self) -> String {
        let taxonomy = Taxonomy::builtin();
        let mut out = String::from("label");
        for col in &self.industries {
            out.push(',');
            out.push_str(&col.industry.replace(',', " "));
        }
        out.push('\n');
        for label in 1..=NUM_LABELS as u8 {
            out.push_str(&format!("({label}) {}", taxonomy.get(label).name));
            for col in &self.industries {
                out.push(',');
                match col.cells[label as usize - 1] {
                    CellValue::Defined { r, .. } => out.push_str(&format!("{r:.3}")),
                    CellValue::Absent => out.push('-'),
                }
            }
            out.push('\n');
        }
        out.push_str("#cases");
        for col in &self.industries {
            out.push_str(&format!(",{}", col.cases));
        }
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// All cells whose correlation magnitude clears the effectiveness
    /// threshold, strongest first.
    pub fn effective_aspects(&self) -> Vec<EffectiveAspect> {
        let taxonomy = Taxonomy::builtin();
        let mut out = Vec::new();
        for col in &self.industries {
            for label in 1..=NUM_LABELS as u8 {
                if let CellValue::Defined { r, .. } = col.cells[label as usize - 1] {
                    if r.abs() > EFFECTIVE_THRESHOLD {
                        out.push(EffectiveAspect {
                            industry: col.industry.clone(),
                            label,
                            name: taxonomy.get(label).name.clone(),
                            r,
                            strength: if r.abs() < MODERATE_THRESHOLD {
                                Strength::Weak
                            } else {
                                Strength::Moderate
                            },
                        });
                    }
                }
            }
        }
        out.sort_by(|a, b| {
            b.r.abs()
                .total_cmp(&a.r.abs())
                .then(a.industry.cmp(&b.industry))
                .then(a.label.cmp(&b.label))
        });
        out
    }
}

/// Correlation strength band for an effective cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    /// Magnitude in (0.25, 0.5).
    Weak,
    /// Magnitude at least 0.5.
    Moderate,
}

/// One reported (industry, label) pairing with a non-negligible
/// correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAspect {
    pub industry: String,
    pub label: u8,
    pub name: String,
    pub r: f64,
    pub strength: Strength,
}

fn digit_run() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[0-9０-９]+(?:[,.][0-9０-９]+)*").expect("static regex"))
}

/// Replaces digit runs (including full-width digits and `,`/`.` group
/// separators) with `[N]` so `50% off` and `30% off` collapse together.
pub fn mask_numbers(text: &str) -> String {
    digit_run().replace_all(text, "[N]").into_owned()
}

/// Frequency list of masked span texts carrying `label`, optionally
/// restricted to one industry; at most `top_k` entries, most frequent
/// first (ties alphabetical).
pub fn extract_expressions(
    golds: &[GoldDocument],
    label: u8,
    industry: Option<&str>,
    top_k: usize,
) -> Vec<(String, usize)> {
    let wanted_industry = industry.map(canonical_industry);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for doc in golds {
        if let Some(want) = wanted_industry {
            if canonical_industry(&doc.industry) != want {
                continue;
            }
        }
        let chars: Vec<char> = doc.text.chars().collect();
        for span in &doc.spans {
            if !span.labels.contains(&label) {
                continue;
            }
            let raw: String = chars[span.start..span.end.min(chars.len())].iter().collect();
            *counts.entry(mask_numbers(&raw)).or_default() += 1;
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out.truncate(top_k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::SpanAnnotation;
    use crate::corpus::AdRecord;

    fn ad(id: &str, industry: &str, imps: u64, clicks: u64) -> AdRecord {
        AdRecord {
            id: id.to_string(),
            advertiser_id: "a".to_string(),
            campaign_id: "c".to_string(),
            title: "t".to_string(),
            description: "d".to_string(),
            lp_meta: None,
            industry: industry.to_string(),
            keywords: vec![],
            impressions: imps,
            clicks,
        }
    }

    fn bits(labels: &[u8]) -> LabelVector {
        LabelVector::from_indices(labels.iter().copied())
    }

    /// Six ads in one industry. Label 2 aligns perfectly with CTR, label 3
    /// is constant, the rest are never set.
    fn fixture() -> (AdCorpus, Vec<(String, LabelVector)>) {
        let records = vec![
            ad("1", "EC", 100, 30),
            ad("2", "EC", 100, 30),
            ad("3", "EC", 100, 30),
            ad("4", "EC", 100, 10),
            ad("5", "EC", 100, 10),
            ad("6", "EC", 100, 10),
        ];
        let preds = vec![
            ("1".to_string(), bits(&[2, 3])),
            ("2".to_string(), bits(&[2, 3])),
            ("3".to_string(), bits(&[2, 3])),
            ("4".to_string(), bits(&[3])),
            ("5".to_string(), bits(&[3])),
            ("6".to_string(), bits(&[3])),
        ];
        (
            AdCorpus {
                records,
                provenance: vec![],
            },
            preds,
        )
    }

    #[test]
    fn perfect_alignment_gives_unit_correlation() {
        let (corpus, preds) = fixture();
        let report = correlate(&corpus, &preds, 1).unwrap();
        assert_eq!(report.industries.len(), 1);
        let col = &report.industries[0];
        assert_eq!(col.industry, "EC");
        assert_eq!(col.cases, 6);
        match col.cells[1] {
            CellValue::Defined { r, n1, n0 } => {
                assert!((r - 1.0).abs() < 1e-12, "r={r}");
                assert_eq!((n1, n0), (3, 3));
            }
            CellValue::Absent => panic!("label 2 must be defined"),
        }
        // Constant-1 and constant-0 labels are both absent.
        assert_eq!(col.cells[2], CellValue::Absent);
        assert_eq!(col.cells[0], CellValue::Absent);
    }

    #[test]
    fn min_cases_filters_small_industries() {
        let (mut corpus, mut preds) = fixture();
        corpus.records.push(ad("7", "Travel", 100, 5));
        preds.push(("7".to_string(), bits(&[2])));
        let report = correlate(&corpus, &preds, 5).unwrap();
        assert_eq!(report.industries.len(), 1);
        assert_eq!(report.industries[0].industry, "EC");
    }

    #[test]
    fn columns_order_by_case_count() {
        let mut records = Vec::new();
        let mut preds = Vec::new();
        for i in 0..3 {
            records.push(ad(&format!("t{i}"), "Travel", 100, 10));
            preds.push((format!("t{i}"), bits(&[1])));
        }
        for i in 0..5 {
            records.push(ad(&format!("e{i}"), "EC", 100, 10));
            preds.push((format!("e{i}"), bits(&[1])));
        }
        let corpus = AdCorpus {
            records,
            provenance: vec![],
        };
        let report = correlate(&corpus, &preds, 1).unwrap();
        let names: Vec<&str> = report
            .industries
            .iter()
            .map(|c| c.industry.as_str())
            .collect();
        assert_eq!(names, vec!["EC", "Travel"]);
    }

    #[test]
    fn csv_has_label_rows_and_cases_footer() {
        let (corpus, preds) = fixture();
        let report = correlate(&corpus, &preds, 1).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + NUM_LABELS + 1);
        assert_eq!(lines[0], "label,EC");
        assert_eq!(lines[2], "(2) Discount price,1.000");
        assert_eq!(lines[1], "(1) Special deals,-");
        assert_eq!(lines[NUM_LABELS + 1], "#cases,6");
    }

    #[test]
    fn json_round_trips() {
        let (corpus, preds) = fixture();
        let report = correlate(&corpus, &preds, 1).unwrap();
        let back: CorrelationReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn effective_aspects_band_by_magnitude() {
        let report = CorrelationReport {
            min_cases: 1,
            industries: vec![IndustryColumn {
                industry: "EC".to_string(),
                cases: 10,
                cells: (1..=NUM_LABELS as u8)
                    .map(|label| match label {
                        1 => CellValue::Defined { r: 0.2, n1: 5, n0: 5 },
                        2 => CellValue::Defined { r: 0.3, n1: 5, n0: 5 },
                        3 => CellValue::Defined { r: -0.6, n1: 5, n0: 5 },
                        _ => CellValue::Absent,
                    })
                    .collect(),
            }],
        };
        let effective = report.effective_aspects();
        assert_eq!(effective.len(), 2);
        assert_eq!(effective[0].label, 3);
        assert_eq!(effective[0].strength, Strength::Moderate);
        assert_eq!(effective[1].label, 2);
        assert_eq!(effective[1].strength, Strength::Weak);
    }

    #[test]
    fn number_masking_handles_groups_and_full_width() {
        assert_eq!(mask_numbers("50% off"), "[N]% off");
        assert_eq!(mask_numbers("1,000.5 yen"), "[N] yen");
        assert_eq!(mask_numbers("５０％引き"), "[N]％引き");
        assert_eq!(mask_numbers("no digits"), "no digits");
        assert_eq!(mask_numbers("3.5 stars, 4 stars"), "[N] stars, [N] stars");
    }

    #[test]
    fn expressions_aggregate_after_masking() {
        let doc = |id: &str, text: &str, industry: &str, spans: Vec<SpanAnnotation>| GoldDocument {
            doc_id: id.to_string(),
            text: text.to_string(),
            spans,
            industry: industry.to_string(),
        };
        let golds = vec![
            doc(
                "a",
                "50% off today",
                "EC",
                vec![SpanAnnotation::new(0, 7, [2]).unwrap()],
            ),
            doc(
                "b",
                "30% off today",
                "EC",
                vec![SpanAnnotation::new(0, 7, [2]).unwrap()],
            ),
            doc(
                "c",
                "free gift",
                "EC",
                vec![SpanAnnotation::new(0, 9, [4]).unwrap()],
            ),
            doc(
                "d",
                "20% off trip",
                "Travel",
                vec![SpanAnnotation::new(0, 7, [2]).unwrap()],
            ),
        ];
        let all = extract_expressions(&golds, 2, None, 10);
        assert_eq!(all, vec![("[N]% off".to_string(), 3)]);
        let total: usize = all.iter().map(|&(_, c)| c).sum();
        assert_eq!(total, 3);

        let ec_only = extract_expressions(&golds, 2, Some("EC"), 10);
        assert_eq!(ec_only, vec![("[N]% off".to_string(), 2)]);
        // Unrelated label sees nothing.
        assert!(extract_expressions(&golds, 9, None, 10).is_empty());
        // top_k truncates.
        assert_eq!(extract_expressions(&golds, 2, None, 0).len(), 0);
    }
}
