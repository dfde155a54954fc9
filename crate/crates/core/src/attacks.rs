//! Label-leakage scoring functions and the leak-AUC metric.
//!
//! The leak AUC is the ROC AUC of a scoring function applied to communicated
//! gradients, computed as the Mann-Whitney statistic with midrank ties:
//! `P(s+ > s-) + 0.5 * P(s+ = s-)` over all positive/negative pairs. This is
//! the finite-sample form of the integral of TPR against FPR.

use crate::error::{Error, Result};
use crate::numeric::{dot, norm, Matrix, RngStream};

/// How a gradient row is turned into a score.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoringFunction {
    /// `||g||_2`
    Norm,
    /// `cos(g, oracle)` with a clean positive-class gradient as oracle.
    Cosine { oracle: Vec<f64> },
}

impl ScoringFunction {
    pub fn cosine(oracle: Vec<f64>) -> Result<Self> {
        if !(norm(&oracle) > 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(ScoringFunction::Cosine { oracle })
    }

    /// Zero-norm rows under the cosine scorer score 0.
    pub fn score(&self, g: &[f64]) -> f64 {
        match self {
            ScoringFunction::Norm => norm_score(g),
            ScoringFunction::Cosine { oracle } => cosine_score(g, oracle).unwrap_or(0.0),
        }
    }
}

pub fn norm_score(g: &[f64]) -> f64 {
    norm(g)
}

pub fn cosine_score(g: &[f64], oracle: &[f64]) -> Result<f64> {
    let (ng, no) = (norm(g), norm(oracle));
    if !(ng > 0.0) || !(no > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(g, oracle) / (ng * no)).clamp(-1.0, 1.0))
}

fn count_classes(labels: &[f64]) -> Result<(usize, usize)> {
    let mut pos = 0;
    let mut neg = 0;
    for &l in labels {
        if l == 1.0 {
            pos += 1;
        } else if l == 0.0 {
            neg += 1;
        } else {
            return Err(Error::InvalidLabel(l));
        }
    }
    Ok((pos, neg))
}

/// Mann-Whitney ROC AUC with midrank tie handling. O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
            context: "scores vs labels",
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let (pos, neg) = count_classes(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc {
            positives: pos,
            negatives: neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of (1-based) midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k] == 1.0).count();
        rank_sum += midrank * tied_pos as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok((u / (p * n)).clamp(0.0, 1.0))
}

/// Picks a uniformly random positive-class row of the clean gradient matrix.
pub fn select_oracle_positive(clean: &Matrix, labels: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    Ok(clean.row(select_oracle_index(labels, rng)?).to_vec())
}

/// Index of the oracle row; used when the same example is needed at several probes.
pub fn select_oracle_index(labels: &[f64], rng: &mut RngStream) -> Result<usize> {
    let positives: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 1.0)
        .map(|(i, _)| i)
        .collect();
    if positives.is_empty() {
        return Err(Error::NoPositive);
    }
    Ok(positives[rng.index(positives.len())])
}

/// ROC AUC of `scorer` applied to each row of `gradients`.
pub fn leak_auc(gradients: &Matrix, labels: &[f64], scorer: &ScoringFunction) -> Result<f64> {
    if gradients.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: gradients.rows(),
            actual: labels.len(),
            context: "gradient rows vs labels",
        });
    }
    let scores: Vec<f64> = gradients.iter_rows().map(|g| scorer.score(g)).collect();
    roc_auc(&scores, labels)
}

/// Linear-interpolation empirical quantile (the `(n-1) * q` convention).
pub fn quantile(series: &[f64], q: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Empty("quantile series"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// One measured iteration of a leak report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakMeasurement {
    pub iteration: usize,
    pub norm_auc: Option<f64>,
    pub cosine_auc: Option<f64>,
}

/// Per-iteration leak AUCs at one probe layer. `None` marks an unmeasured iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeakReport {
    pub series: Vec<LeakMeasurement>,
}

impl LeakReport {
    pub fn push(&mut self, m: LeakMeasurement) {
        self.series.push(m);
    }

    pub fn norm_quantile(&self, q: f64) -> Option<f64> {
        let v: Vec<f64> = self.series.iter().filter_map(|m| m.norm_auc).collect();
        quantile(&v, q).ok()
    }

    pub fn cosine_quantile(&self, q: f64) -> Option<f64> {
        let v: Vec<f64> = self.series.iter().filter_map(|m| m.cosine_auc).collect();
        quantile(&v, q).ok()
    }
}
