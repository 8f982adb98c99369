use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{InitSpec, Real};

/// The trainable unit of one PE/PI layer: diagonal block `S`, off-diagonal
/// block `O` (both `out_dim x in_dim`, row-major) and one shared bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SubMatrixPair<T> {
    in_dim: usize,
    out_dim: usize,
    s: Vec<T>,
    o: Vec<T>,
    bias: Vec<T>,
}

pub fn new_sub_matrix_pair<T: Real, R: Rng + ?Sized>(
    in_dim: usize,
    out_dim: usize,
    init: InitSpec,
    rng: &mut R,
) -> Result<SubMatrixPair<T>> {
    SubMatrixPair::new(in_dim, out_dim, init, rng)
}

impl<T: Real> SubMatrixPair<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, init: InitSpec, rng: &mut R) -> Result<Self> {
        Self::with_inits(in_dim, out_dim, init, init, rng)
    }

    /// Separate initialization for the diagonal and off-diagonal blocks; the bias starts at zero.
    pub fn with_inits<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        s_init: InitSpec,
        o_init: InitSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid(format!("sub-matrix dims must be >= 1, got {out_dim}x{in_dim}")));
        }
        let mut s = vec![T::zero(); in_dim * out_dim];
        let mut o = vec![T::zero(); in_dim * out_dim];
        let bias = vec![T::zero(); out_dim];
        s_init.fill(in_dim, &mut s, rng);
        o_init.fill(in_dim, &mut o, rng);
        Ok(Self { in_dim, out_dim, s, o, bias })
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, s: Vec<T>, o: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("sub-matrix dims must be >= 1"));
        }
        let n = in_dim * out_dim;
        if s.len() != n || o.len() != n || bias.len() != out_dim {
            return Err(Error::shape(format!(
                "{out_dim}x{in_dim} pair: got S {}, O {}, bias {}",
                s.len(),
                o.len(),
                bias.len()
            )));
        }
        Ok(Self { in_dim, out_dim, s, o, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn s(&self) -> &[T] {
        &self.s
    }

    pub fn o(&self) -> &[T] {
        &self.o
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    /// Mutable views in the canonical order `S, O, bias`.
    pub fn arrays_mut(&mut self) -> [&mut [T]; 3] {
        [&mut self.s, &mut self.o, &mut self.bias]
    }

    pub fn param_count(&self) -> usize {
        2 * self.s.len() + self.bias.len()
    }

    pub fn cast<U: Real>(&self) -> SubMatrixPair<U> {
        use crate::nn::real::cast_vec;
        SubMatrixPair {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            s: cast_vec(&self.s),
            o: cast_vec(&self.o),
            bias: cast_vec(&self.bias),
        }
    }
}

/// Explicit `(out_dim*K) x (in_dim*K)` weight matrix plus the bias replicated per block.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> EffectiveMatrix<T> {
    /// Block `(i, j)` as a row-major `out_dim x in_dim` copy.
    pub fn block(&self, i: usize, j: usize) -> Vec<T> {
        let (bo, bi) = (self.rows / self.k, self.cols / self.k);
        (0..bo)
            .flat_map(|r| {
                let start = (i * bo + r) * self.cols + j * bi;
                self.weights[start..start + bi].iter().copied()
            })
            .collect()
    }

    /// `W x + b` with plain row-by-row dot products in `f64`.
    pub fn apply(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.cols {
            return Err(Error::shape(format!("effective matrix expects {} inputs, got {}", self.cols, input.len())));
        }
        Ok(self
            .weights
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, &b)| {
                let dot: f64 = row.iter().zip(input).map(|(w, x)| w.as_f64() * x.as_f64()).sum();
                T::cast_from(dot + b.as_f64())
            })
            .collect())
    }
}

pub fn build_effective_matrix<T: Real>(pair: &SubMatrixPair<T>, k: usize) -> Result<EffectiveMatrix<T>> {
    if k == 0 {
        return Err(Error::invalid("scale k must be >= 1"));
    }
    let (a, b) = (pair.out_dim, pair.in_dim);
    let (rows, cols) = (a * k, b * k);
    let mut weights = vec![T::zero(); rows * cols];
    for bi in 0..k {
        for bj in 0..k {
            let src = if bi == bj { &pair.s } else { &pair.o };
            for r in 0..a {
                let dst = (bi * a + r) * cols + bj * b;
                weights[dst..dst + b].copy_from_slice(&src[r * b..(r + 1) * b]);
            }
        }
    }
    let bias = (0..k).flat_map(|_| pair.bias.iter().copied()).collect();
    Ok(EffectiveMatrix { rows, cols, k, weights, bias })
}
