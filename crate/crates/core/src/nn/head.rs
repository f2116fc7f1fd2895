//! Fully-connected layer, softmax and cross-entropy.

use crate::error::{Error, Result};

/// `logits = features · W + b` with `W` stored `[features, classes]`.
pub fn fc_forward(features: &[f64], weights: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    let classes = bias.len();
    if classes == 0 || weights.len() != features.len() * classes {
        return Err(Error::Shape(format!(
            "{} features, {} weights, {} classes",
            features.len(),
            weights.len(),
            classes
        )));
    }
    let mut logits = bias.to_vec();
    for (x, row) in features.iter().zip(weights.chunks_exact(classes)) {
        for (l, w) in logits.iter_mut().zip(row) {
            *l += x * w;
        }
    }
    Ok(logits)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Class probabilities for one feature vector.
pub fn head_forward(features: &[f64], weights: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    fc_forward(features, weights, bias).map(|l| softmax(&l))
}

/// `−log softmax(logits)[label]`, computed as `logsumexp − logit`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Input(format!("label {label} with {} classes", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// Index of the largest probability; the first one wins ties.
pub fn classify(probs: &[f64]) -> usize {
    probs.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best }).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logits_are_uniform() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        for logits in [[1000.0, -1000.0], [3.0, 2.9], [-5.0, 7.5]] {
            let p = softmax(&logits);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let logits = [0.3, -1.2];
        let p = softmax(&logits);
        assert!((cross_entropy(&logits, 1).unwrap() + p[1].ln()).abs() < 1e-12);
        assert!(cross_entropy(&logits, 2).is_err());
    }

    #[test]
    fn fc_shapes() {
        let out = fc_forward(&[1.0, 2.0], &[1.0, 0.0, 0.0, 1.0], &[0.5, -0.5]).unwrap();
        assert_eq!(out, vec![1.5, 1.5]);
        assert!(fc_forward(&[1.0], &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]).is_err());
        assert_eq!(classify(&[0.5, 0.5]), 0);
        assert_eq!(classify(&[0.2, 0.8]), 1);
    }
}
