use crate::error::{Error, Result};

/// Denominator floor so that near-zero gradients are compared absolutely.
const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Index of the parameter with the largest error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences `(f(p+h) - f(p-h)) / 2h`.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[f64], analytic: &[f64], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::shape(format!(
            "{} params but {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = loss_fn(&probe);
        probe[i] = orig - step;
        let minus = loss_fn(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("loss is not finite around parameter {i}")));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_err || i == 0 {
            report = GradCheckReport { max_rel_err: err, worst_index: i, analytic: analytic[i], numeric };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let report = finite_diff_check(|p| p[0] * p[0], &[3.0], &[6.0], 1e-3).unwrap();
        assert!((report.numeric - 6.0).abs() < 1e-4);
        assert!(report.max_rel_err < 1e-6);
    }

    #[test]
    fn linear_is_exact() {
        let report = finite_diff_check(|p| 2.0 * p[0] - 0.5 * p[1], &[1.0, -4.0], &[2.0, -0.5], 1e-3).unwrap();
        assert!(report.max_rel_err < 1e-9, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let report = finite_diff_check(|p| p[0] * p[0] + p[1], &[3.0, 1.0], &[6.0, 1.5], 1e-3).unwrap();
        assert!(report.max_rel_err > 0.1);
        assert_eq!(report.worst_index, 1);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let err = finite_diff_check(|p| (p[0]).ln(), &[0.0], &[1.0], 1e-3).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }
}
