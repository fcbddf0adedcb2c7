use super::AuditError;

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64, AuditError> {
    if predictions.len() != truths.len() {
        return Err(AuditError::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(AuditError::EmptyInput);
    }
    let sum: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

/// Rank-based (Mann-Whitney) AUC; tied scores share credit equally.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, AuditError> {
    if scores.len() != labels.len() {
        return Err(AuditError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(AuditError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Micro-averaged F1. With one label per sample, micro precision and recall
/// both equal accuracy.
pub fn micro_f1(predicted: &[usize], truth: &[usize]) -> Result<f64, AuditError> {
    if predicted.len() != truth.len() {
        return Err(AuditError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(AuditError::EmptyInput);
    }
    let tp = predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64;
    let fp = predicted.len() as f64 - tp;
    let fn_ = fp;
    Ok(2.0 * tp / (2.0 * tp + fp + fn_))
}
