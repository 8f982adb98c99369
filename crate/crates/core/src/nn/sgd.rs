use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Real;

/// Learning rate `base_lr * decay^epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSchedule {
    pub base_lr: f64,
    pub decay: f64,
    pub epoch: u32,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        Self { base_lr: 0.05, decay: 0.99, epoch: 0 }
    }
}

impl SgdSchedule {
    pub fn new(base_lr: f64, decay: f64) -> Result<Self> {
        if !(base_lr > 0.0 && base_lr.is_finite()) || !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::invalid(format!("learning rate {base_lr} and decay {decay} must be positive")));
        }
        Ok(Self { base_lr, decay, epoch: 0 })
    }

    pub fn at_epoch(self, epoch: u32) -> Self {
        Self { epoch, ..self }
    }

    pub fn lr(&self) -> f64 {
        self.base_lr * self.decay.powi(self.epoch as i32)
    }
}

/// `p <- p - lr(epoch) * g`.
pub fn sgd_step<T: Real>(params: &mut [T], grads: &[f64], schedule: &SgdSchedule) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!("{} params but {} grads", params.len(), grads.len())));
    }
    let lr = schedule.lr();
    for (p, &g) in params.iter_mut().zip(grads) {
        *p = T::cast_from(p.as_f64() - lr * g);
    }
    Ok(())
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decayed_learning_rate() {
        let s = SgdSchedule::default();
        assert_eq!(s.lr(), 0.05);
        assert!((s.at_epoch(1).lr() - 0.0495).abs() < 1e-15);
    }

    #[test]
    fn single_step() {
        let mut w = [1.0f32];
        sgd_step(&mut w, &[2.0], &SgdSchedule::default()).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut w = [0.125f32, -3.5, 7.0];
        let before = w;
        sgd_step(&mut w, &[0.0; 3], &SgdSchedule::default().at_epoch(4)).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn shape_mismatch() {
        let mut w = [0.0f32; 2];
        assert!(matches!(sgd_step(&mut w, &[0.0], &SgdSchedule::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_non_positive_rates() {
        assert!(SgdSchedule::new(0.0, 0.99).is_err());
        assert!(SgdSchedule::new(0.05, -1.0).is_err());
    }

    #[test]
    fn clipping_rescales_only_large_gradients() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g, vec![vec![3.0], vec![4.0]]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
    }
}
