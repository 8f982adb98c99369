use crate::error::{Error, Result};
use crate::nn::Real;

#[derive(Debug, Clone)]
pub struct SoftmaxXent<T> {
    pub loss: f64,
    pub probs: Vec<T>,
    /// `softmax(logits) - onehot(label)`.
    pub logit_grad: Vec<T>,
}

fn softmax_f64<T: Real>(logits: &[T]) -> (Vec<f64>, f64, f64) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let exps: Vec<f64> = logits.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.into_iter().map(|e| e / sum).collect(), max, sum)
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    softmax_f64(logits).0.into_iter().map(T::cast_from).collect()
}

/// Fused softmax + cross-entropy in log-sum-exp form, so the loss is never negative.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<SoftmaxXent<T>> {
    if label >= logits.len() {
        return Err(Error::invalid(format!("label {label} out of range for {} classes", logits.len())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let (probs, max, sum) = softmax_f64(logits);
    let loss = (max - logits[label].as_f64()) + sum.ln();
    let logit_grad = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| T::cast_from(if i == label { p - 1.0 } else { p }))
        .collect();
    Ok(SoftmaxXent { loss, probs: probs.into_iter().map(T::cast_from).collect(), logit_grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let r = softmax_cross_entropy(&[0.7f32; 10], 3).unwrap();
        assert!((r.loss - std::f64::consts::LN_10).abs() < 1e-6);
    }

    #[test]
    fn saturated_correct_class() {
        let mut logits = vec![0.0f32; 10];
        logits[4] = 30.0;
        let r = softmax_cross_entropy(&logits, 4).unwrap();
        assert!(r.loss < 1e-9 && r.loss >= 0.0);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(softmax_cross_entropy(&[0.0f32; 3], 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn logit_grad_matches_finite_differences() {
        let logits = vec![0.3, -1.2, 2.0, 0.0, 0.7];
        let r = softmax_cross_entropy(&logits, 2).unwrap();
        let report =
            finite_diff_check(|p| softmax_cross_entropy(p, 2).unwrap().loss, &logits, &r.logit_grad, 1e-4).unwrap();
        assert!(report.max_rel_err < 1e-3, "{report:?}");
    }

    #[test]
    fn large_logits_stay_finite() {
        let r = softmax_cross_entropy(&[1000.0f32, -1000.0], 1).unwrap();
        assert!((r.loss - 2000.0).abs() < 1e-6);
        assert!(r.probs.iter().all(|p| p.is_finite()));
    }
}
