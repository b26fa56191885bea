use super::TrainError;

/// ROC AUC as the Mann–Whitney statistic: the fraction of (anomaly, normal)
/// pairs where the anomaly (label 1) scores higher, ties counting one half.
///
/// Pair counts are exact integers; the only rounding is the final division
/// `(2·concordant + tied) / (2·positives·negatives)`.
pub fn evaluate_auc(scores: &[f64], labels: &[u8]) -> Result<f64, TrainError> {
    if scores.len() != labels.len() {
        return Err(TrainError::Evaluation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(TrainError::Evaluation(format!("score {i} is not finite")));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(TrainError::Evaluation("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(TrainError::Evaluation(
            "AUC needs both anomalous and normal graphs".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let (mut concordant, mut tied, mut neg_below) = (0u128, 0u128, 0u128);
    let mut start = 0;
    while start < order.len() {
        let s = scores[order[start]];
        let mut end = start;
        let (mut p, mut n) = (0u128, 0u128);
        // -0.0 and 0.0 compare equal, as they do in the pairwise definition
        while end < order.len() && scores[order[end]] == s {
            if labels[order[end]] == 1 {
                p += 1;
            } else {
                n += 1;
            }
            end += 1;
        }
        concordant += p * neg_below;
        tied += p * n;
        neg_below += n;
        start = end;
    }
    Ok((2 * concordant + tied) as f64 / (2 * pos * neg) as f64)
}
