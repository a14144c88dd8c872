//! Evaluation statistics: precision/recall/F1 counting, point-biserial
//! correlation, impression-weighted ROC AUC, and regression errors.
//!
//! Conventions:
//! - F1 treats 0/0 as 0 so empty cells never poison macro averages.
//! - The point-biserial coefficient uses the population standard deviation,
//!   making it identical to a Pearson correlation against a 0/1 indicator.
//! - AUC is computed with midranks, so ties contribute one half.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// True-positive / false-positive / false-negative tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Counts { tp, fp, fn_ }
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Whether any prediction or gold item contributed to this cell.
    pub fn is_active(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 from raw counts; `0.0` whenever precision and recall are both zero.
pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    Counts::new(tp, fp, fn_).f1()
}

/// Point-biserial correlation between a binary column and a continuous one:
///
/// `r = (m1 - m0) / s * sqrt(n1 * n0 / n^2)`
///
/// where `m1`/`m0` are the group means, `s` is the population standard
/// deviation of all values, and `n1`/`n0` the group sizes. Errors when the
/// binary column is single-class or the values have zero variance.
pub fn point_biserial(binary: &[bool], values: &[f64]) -> Result<f64> {
    if binary.len() != values.len() || binary.is_empty() {
        return Err(Error::invalid(format!(
            "point_biserial needs equal nonzero lengths, got {} and {}",
            binary.len(),
            values.len()
        )));
    }
    let n = values.len() as f64;
    let n1 = binary.iter().filter(|&&b| b).count() as f64;
    let n0 = n - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return Err(Error::Undefined(
            "point-biserial over a single-class binary column".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::Undefined(
            "point-biserial over zero-variance values".into(),
        ));
    }
    let m1 = binary
        .iter()
        .zip(values)
        .filter(|(b, _)| **b)
        .map(|(_, v)| v)
        .sum::<f64>()
        / n1;
    let m0 = binary
        .iter()
        .zip(values)
        .filter(|(b, _)| !**b)
        .map(|(_, v)| v)
        .sum::<f64>()
        / n0;
    Ok((m1 - m0) / var.sqrt() * (n1 * n0 / (n * n)).sqrt())
}

/// One scored group of binary outcomes: `positives` events labeled 1 and
/// `negatives` events labeled 0, all sharing `score`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucItem {
    pub score: f64,
    pub positives: u64,
    pub negatives: u64,
}

/// ROC AUC over weighted items via the rank-sum formulation with midranks;
/// equivalent to expanding every item into individual positive/negative
/// events. Errors when either class is empty or a score is not finite.
pub fn weighted_auc(items: &[AucItem]) -> Result<f64> {
    let total_pos: u64 = items.iter().map(|i| i.positives).sum();
    let total_neg: u64 = items.iter().map(|i| i.negatives).sum();
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::Undefined(
            "AUC needs at least one positive and one negative event".into(),
        ));
    }
    if items.iter().any(|i| !i.score.is_finite()) {
        return Err(Error::invalid("AUC scores must be finite"));
    }
    let mut sorted: Vec<&AucItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    // Walk tie groups in ascending score order; every event in a group gets
    // the group's midrank.
    let mut rank_sum_pos = 0.0f64;
    let mut seen = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut group_pos = 0u64;
        let mut group_total = 0u64;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            group_pos += sorted[j].positives;
            group_total += sorted[j].positives + sorted[j].negatives;
            j += 1;
        }
        let midrank = seen as f64 + (group_total as f64 + 1.0) / 2.0;
        rank_sum_pos += group_pos as f64 * midrank;
        seen += group_total;
        i = j;
    }
    let p = total_pos as f64;
    let n = total_neg as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Root-mean-squared error. Errors unless both slices have the same nonzero
/// length.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_paired(predicted, actual)?;
    let n = predicted.len() as f64;
    let sq = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>();
    Ok((sq / n).sqrt())
}

/// Mean absolute error. Errors unless both slices have the same nonzero
/// length.
pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_paired(predicted, actual)?;
    let n = predicted.len() as f64;
    Ok(predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / n)
}

fn check_paired(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "paired metrics need equal nonzero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}
