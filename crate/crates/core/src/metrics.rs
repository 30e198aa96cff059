//! Ranking metrics for outlier scores (higher score = more outlying).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("scores ({scores}) and labels ({labels}) differ in length")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("labels need both classes (positives: {pos}, negatives: {neg})")]
    SingleClass { pos: usize, neg: usize },
    #[error("score {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("kept set is empty")]
    EmptyKeptSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc: f64,
    pub prauc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<EvalResult, MetricError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    Ok(EvalResult { auc: roc_auc(scores, labels)?, prauc: pr_auc(scores, labels)?, n_pos, n_neg })
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore { index });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass { pos, neg });
    }
    Ok((pos, neg))
}

/// Groups of tied scores in the given order: `(positives, negatives)` per group.
fn tie_groups(scores: &[f64], labels: &[u8], descending: bool) -> Vec<(u64, u64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = scores[a].total_cmp(&scores[b]);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut prev: Option<f64> = None;
    for i in idx {
        if prev != Some(scores[i]) {
            groups.push((0, 0));
            prev = Some(scores[i]);
        }
        let g = groups.last_mut().expect("group pushed above");
        if labels[i] == 1 {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counted half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    // twice the U statistic, kept integral so the result is exact up to one division
    let mut twice_u: u128 = 0;
    let mut neg_below: u64 = 0;
    for (p, n) in tie_groups(scores, labels, false) {
        twice_u += 2 * u128::from(p) * u128::from(neg_below) + u128::from(p) * u128::from(n);
        neg_below += n;
    }
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// Average precision, `sum_k (R_k - R_{k-1}) P_k` over descending thresholds
/// with tied scores forming a single threshold.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, _) = check(scores, labels)?;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (p, n) in tie_groups(scores, labels, true) {
        tp += p;
        fp += n;
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Fraction of outliers among the samples kept by truncation.
///
/// `mask[i]` refers to dataset row `batch_indices[i]`.
pub fn kept_outlier_fraction(mask: &[bool], labels: &[u8], batch_indices: &[usize]) -> Result<f64, MetricError> {
    let mut kept = 0usize;
    let mut outliers = 0usize;
    for (&keep, &i) in mask.iter().zip(batch_indices) {
        if keep {
            kept += 1;
            outliers += usize::from(labels[i] == 1);
        }
    }
    if kept == 0 {
        return Err(MetricError::EmptyKeptSet);
    }
    Ok(outliers as f64 / kept as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1); zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_tied_auc() {
        let labels = [0, 0, 1, 1];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(MetricError::SingleClass { pos: 2, neg: 0 })));
        assert!(matches!(pr_auc(&[0.1, 0.2], &[0, 0]), Err(MetricError::SingleClass { .. })));
        assert!(matches!(roc_auc(&[0.1], &[0, 1]), Err(MetricError::LengthMismatch { .. })));
    }

    #[test]
    fn perfect_ranking_prauc_is_one() {
        let scores: Vec<f64> = (0..10).map(f64::from).collect();
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        assert_eq!(pr_auc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn kept_fraction_cases() {
        let labels = [0, 1, 0, 0, 1];
        assert_eq!(kept_outlier_fraction(&[true, false, true], &labels, &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(kept_outlier_fraction(&[true, true, true, true], &labels, &[0, 1, 2, 3]).unwrap(), 0.25);
        assert_eq!(kept_outlier_fraction(&[true; 5], &labels, &[0, 1, 2, 3, 4]).unwrap(), 0.4);
        assert_eq!(kept_outlier_fraction(&[false], &labels, &[0]), Err(MetricError::EmptyKeptSet));
    }

    #[test]
    fn spearman_basic() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 20.0, 40.0]) - 0.9486832980505138).abs() < 1e-12);
    }

    #[test]
    fn std_dev_sample() {
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - 1.2909944487358056).abs() < 1e-15);
        assert_eq!(std_dev(&[3.0]), 0.0);
    }
}
