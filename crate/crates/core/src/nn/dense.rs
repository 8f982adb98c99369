use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, InitSpec, Real};

/// Fully connected layer `y = act(W x + b)`, `W` row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    in_dim: usize,
    out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    activation: Activation,
}

/// Gradients from one backward call.
#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, init: InitSpec, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid(format!("dense dims must be >= 1, got {in_dim}x{out_dim}")));
        }
        let mut weights = vec![T::zero(); in_dim * out_dim];
        init.fill(in_dim, &mut weights, rng);
        Ok(Self { in_dim, out_dim, weights, bias: vec![T::zero(); out_dim] })
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("dense dims must be >= 1"));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::shape(format!(
                "dense {out_dim}x{in_dim}: got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self { in_dim, out_dim, weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, input: &[T], activation: Activation) -> Result<(Vec<T>, DenseCache<T>)> {
        if input.len() != self.in_dim {
            return Err(Error::shape(format!(
                "dense expects input of length {}, got {}",
                self.in_dim,
                input.len()
            )));
        }
        let pre: Vec<T> = self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x))
            .collect();
        let out = pre.iter().map(|&z| activation.apply(z)).collect();
        Ok((out, DenseCache { input: input.to_vec(), pre, activation }))
    }

    /// Backward pass returning fresh gradients.
    pub fn backward(&self, cache: &DenseCache<T>, out_grad: &[T]) -> Result<DenseGrads<T>> {
        let mut weights = vec![0.0; self.weights.len()];
        let mut bias = vec![0.0; self.out_dim];
        let input = self.backward_accumulate(cache, out_grad, &mut weights, &mut bias)?;
        Ok(DenseGrads { weights, bias, input })
    }

    /// Backward pass adding parameter gradients into `dw`/`db`; returns the input gradient.
    pub fn backward_accumulate(
        &self,
        cache: &DenseCache<T>,
        out_grad: &[T],
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Result<Vec<T>> {
        if out_grad.len() != self.out_dim || cache.input.len() != self.in_dim {
            return Err(Error::shape(format!(
                "dense backward expects grad of length {}, got {}",
                self.out_dim,
                out_grad.len()
            )));
        }
        if dw.len() != self.weights.len() || db.len() != self.out_dim {
            return Err(Error::shape("dense gradient accumulator has wrong size"));
        }
        let mut dinput = vec![T::zero(); self.in_dim];
        for (i, ((&og, &pre), row)) in out_grad
            .iter()
            .zip(&cache.pre)
            .zip(self.weights.chunks_exact(self.in_dim))
            .enumerate()
        {
            let g = og * cache.activation.derivative(pre);
            if g == T::zero() {
                continue;
            }
            db[i] += g.as_f64();
            let gf = g.as_f64();
            for (d, &x) in dw[i * self.in_dim..(i + 1) * self.in_dim].iter_mut().zip(&cache.input) {
                *d += gf * x.as_f64();
            }
            for (d, &w) in dinput.iter_mut().zip(row) {
                *d += g * w;
            }
        }
        Ok(dinput)
    }
}
