//! Test-set metrics: area under the precision-recall curve and log-loss.

use serde::Serialize;

use crate::data::LabelVector;
use crate::error::{Error, Result};
use crate::glm::class_probability;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvaluationResult {
    pub auprc: f64,
    pub log_loss: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Step-rule area under the precision-recall curve, `Σ (R_k − R_{k−1})·P_k`
/// over distinct score thresholds, highest first. Examples with equal scores
/// enter the curve together as one block.
pub fn auprc(scores: &[f64], labels: &LabelVector) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidInput(format!("score {s} is not a number")));
    }
    let total_pos = labels.positives();
    if total_pos == 0 {
        return Err(Error::UndefinedMetric(
            "precision-recall curve needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            if labels[order[k]] > 0.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Mean negative log-likelihood of probabilities `scores` in (0, 1).
pub fn log_loss(scores: &[f64], labels: &LabelVector) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("log-loss of an empty set".into()));
    }
    let mut total = 0.0;
    for (&s, &y) in scores.iter().zip(labels.as_slice()) {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidInput(format!(
                "probability {s} outside (0, 1)"
            )));
        }
        total -= if y > 0.0 { s.ln() } else { (1.0 - s).ln() };
    }
    Ok(total / scores.len() as f64)
}

/// Scores margins `βᵀx_i` against `labels`.
pub fn evaluate(margins: &[f64], labels: &LabelVector) -> Result<EvaluationResult> {
    let probs = margins
        .iter()
        .map(|&m| class_probability(m))
        .collect::<Result<Vec<_>>>()?;
    let positives = labels.positives();
    Ok(EvaluationResult {
        auprc: auprc(margins, labels)?,
        log_loss: log_loss(&probs, labels)?,
        positives,
        negatives: labels.len() - positives,
    })
}
