//! Softmax and cross-entropy.

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Log-softmax computed via log-sum-exp.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Returns `−ln softmax(logits)[target]` and its gradient `softmax − one_hot`.
///
/// Panics if `target` is out of range.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    assert!(target < logits.len(), "target class {target} out of range");
    let loss = -log_softmax(logits)[target];
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_give_log_c() {
        for c in 2..8 {
            let (loss, _) = softmax_cross_entropy(&vec![0.3; c], 1);
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logits_give_near_zero_loss() {
        let (loss, grad) = softmax_cross_entropy(&[30.0, -30.0], 0);
        assert!(loss < 1e-20);
        assert!(grad[0].abs() < 1e-20);
    }

    #[test]
    fn large_logits_stay_finite() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, -1000.0, 0.0], 1);
        assert!((loss - 2000.0).abs() < 1e-9);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    proptest! {
        #[test]
        fn gradient_is_softmax_minus_one_hot(
            logits in prop::collection::vec(-20.0f64..20.0, 2..10),
            pick in 0usize..100,
        ) {
            let target = pick % logits.len();
            let (_, grad) = softmax_cross_entropy(&logits, target);
            let s = softmax(&logits);
            for (i, (g, p)) in grad.iter().zip(&s).enumerate() {
                let expected = if i == target { p - 1.0 } else { *p };
                prop_assert!((g - expected).abs() < 1e-15);
            }
        }

        #[test]
        fn softmax_is_a_distribution(logits in prop::collection::vec(-15.0f64..15.0, 1..12)) {
            let s = softmax(&logits);
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.iter().all(|&p| p > 0.0 && p <= 1.0));
            if logits.len() > 1 {
                prop_assert!(s.iter().all(|&p| p < 1.0));
            }
        }
    }
}
