//! Minimal deterministic neural-network engine.
//!
//! Layers are plain structs with explicit forward/backward functions; there is
//! no autograd graph. Parameters are stored in a generic [`Real`] (`f32` for
//! training, `f64` for gradient checking) while parameter gradients are always
//! accumulated in `f64`.

mod conv;
mod dense;
mod encoder;
mod gradcheck;
mod loss;
pub(crate) mod real;
mod sgd;
mod tensor;

pub use conv::{conv_output_side, pool_output_side, ConvBlock, ConvCache, KERNEL};
pub use dense::{Dense, DenseCache, DenseGrads};
pub use encoder::{Encoder, EncoderCache};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use loss::{softmax, softmax_cross_entropy, SoftmaxXent};
pub use real::Real;
pub use sgd::{clip_global_norm, sgd_step, SgdSchedule};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

/// Element-wise activation applied after an affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation value.
    #[inline]
    pub fn derivative<T: Real>(self, pre: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Initialization scheme for freshly created weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitSpec {
    Zeros,
    /// Uniform on `[-r, r]`.
    Uniform { r: f64 },
    /// Uniform on `[-r, r]` with `r = sqrt(6 / fan_in)` (variance `2 / fan_in`).
    FanIn,
    /// Uniform on `[-r, r]` with `r = sqrt(3 / fan_in)` (variance `1 / fan_in`).
    LeCun,
}

impl InitSpec {
    pub(crate) fn fill<T: Real, R: rand::Rng + ?Sized>(self, fan_in: usize, out: &mut [T], rng: &mut R) {
        let r = match self {
            InitSpec::Zeros => {
                out.iter_mut().for_each(|v| *v = T::zero());
                return;
            }
            InitSpec::Uniform { r } => r,
            InitSpec::FanIn => (6.0 / fan_in as f64).sqrt(),
            InitSpec::LeCun => (3.0 / fan_in as f64).sqrt(),
        };
        for v in out.iter_mut() {
            let u: f64 = rng.random_range(-1.0..=1.0);
            *v = T::cast_from(u * r);
        }
        // f32 rounding can push |r*u| past r by half an ulp
        let bound = T::cast_from(r);
        for v in out.iter_mut() {
            if v.abs() > bound {
                *v = bound.copysign(*v);
            }
        }
    }
}

pub(crate) fn check_finite<T: Real>(what: &str, data: &[T]) -> crate::Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::Numeric(format!("{what} contains non-finite values")))
    }
}
