use crate::error::{Error, Result};

/// Lower bound applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Label-smoothed cross-entropy of a probability vector against class `label`.
pub fn smoothed_cross_entropy(probs: &[f64], label: usize, epsilon: f64) -> Result<f64> {
    let k = probs.len();
    if label >= k {
        return Err(Error::ShapeMismatch(format!("label {label} outside {k} classes")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!("smoothing {epsilon} outside [0, 1)")));
    }
    Ok(probs
        .iter()
        .enumerate()
        .map(|(i, &p)| -smoothed_target(i, label, epsilon, k) * p.max(PROB_FLOOR).ln())
        .sum())
}

pub fn smoothed_target(class: usize, label: usize, epsilon: f64, classes: usize) -> f64 {
    let hot = if class == label { 1.0 - epsilon } else { 0.0 };
    hot + epsilon / classes as f64
}

/// Mean L1 distance between predicted and target coordinates.
pub fn l1_loss(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::TooFewSamples { have: 0, need: 1 });
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (0..3).map(|i| (p[i] - t[i]).abs()).sum::<f64>())
        .sum();
    Ok(total / pred.len() as f64)
}
