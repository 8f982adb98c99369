use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, Activation, Encoder, EncoderCache, InitSpec, Real};
use crate::pepi::layer::backward_accumulate;
use crate::pepi::{pepi_layer_forward, pi_readout, ForwardCache, PairGrads, SubMatrixPair};

/// Layer widths of the per-view encoder and the PE/PI stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub in_channels: usize,
    pub side: usize,
    /// Output channels of each 5x5 conv + 2x2 pool block.
    pub conv_channels: Vec<usize>,
    /// Per-block widths of the hidden PE/PI layers (ReLU).
    pub hidden: Vec<usize>,
    /// Width of the final block (identity activation, softmax in the loss).
    pub classes: usize,
}

impl ArchSpec {
    /// 28x28 grayscale input: 28 -> 24 -> 12 -> 8 -> 4, 256 features per view.
    pub fn mnist() -> Self {
        Self { in_channels: 1, side: 28, conv_channels: vec![8, 16], hidden: vec![64, 32], classes: 10 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need >= 2 classes, got {}", self.classes)));
        }
        if self.hidden.contains(&0) || self.conv_channels.contains(&0) {
            return Err(Error::Config("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    /// `(in, out)` widths of every head layer given the encoder feature size.
    pub fn head_dims(&self, feature_dim: usize) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = feature_dim;
        for &h in self.hidden.iter().chain(std::iter::once(&self.classes)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PepiLayer<T> {
    pub pair: SubMatrixPair<T>,
    pub activation: Activation,
}

/// Per-client network: a weight-shared encoder applied to each of the `K`
/// views, then a stack of PE/PI layers read out at `target_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledModel<T> {
    encoder: Encoder<T>,
    layers: Vec<PepiLayer<T>>,
    scale_k: usize,
    target_index: usize,
}

#[derive(Debug, Clone)]
pub struct ModelCache<T> {
    encoders: Vec<EncoderCache<T>>,
    layers: Vec<ForwardCache<T>>,
}

impl<T: Real> ScaledModel<T> {
    /// Conv kernels and `S` use LeCun uniform init; `O` and biases start at zero.
    pub fn new<R: Rng + ?Sized>(arch: &ArchSpec, scale_k: usize, rng: &mut R) -> Result<Self> {
        Self::with_inits(arch, scale_k, InitSpec::LeCun, InitSpec::Zeros, rng)
    }

    pub fn with_inits<R: Rng + ?Sized>(
        arch: &ArchSpec,
        scale_k: usize,
        s_init: InitSpec,
        o_init: InitSpec,
        rng: &mut R,
    ) -> Result<Self> {
        arch.validate()?;
        let encoder = Encoder::new(arch.in_channels, arch.side, &arch.conv_channels, s_init, rng)?;
        let dims = arch.head_dims(encoder.feature_dim());
        let last = dims.len() - 1;
        let layers = dims
            .into_iter()
            .enumerate()
            .map(|(i, (b, a))| {
                let pair = SubMatrixPair::with_inits(b, a, s_init, o_init, rng)?;
                let activation = if i == last { Activation::Identity } else { Activation::Relu };
                Ok(PepiLayer { pair, activation })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(encoder, layers, scale_k)
    }

    pub fn from_parts(encoder: Encoder<T>, layers: Vec<PepiLayer<T>>, scale_k: usize) -> Result<Self> {
        if scale_k == 0 {
            return Err(Error::invalid("scale k must be >= 1"));
        }
        if layers.is_empty() {
            return Err(Error::invalid("model needs at least one PE/PI layer"));
        }
        let mut prev = encoder.feature_dim();
        for (i, l) in layers.iter().enumerate() {
            if l.pair.in_dim() != prev {
                return Err(Error::shape(format!(
                    "layer {i} expects {} inputs but the previous stage produces {prev}",
                    l.pair.in_dim()
                )));
            }
            prev = l.pair.out_dim();
        }
        Ok(Self { encoder, layers, scale_k, target_index: 0 })
    }

    pub fn scale_k(&self) -> usize {
        self.scale_k
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn encoder(&self) -> &Encoder<T> {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Encoder<T> {
        &mut self.encoder
    }

    pub fn layers(&self) -> &[PepiLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [PepiLayer<T>] {
        &mut self.layers
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.pair.out_dim())
    }

    pub fn input_len(&self) -> usize {
        self.encoder.input_len()
    }

    /// Runs the PE stack on `K` views and returns every output block.
    pub fn forward_blocks(&self, views: &[&[T]]) -> Result<(Vec<Vec<T>>, ModelCache<T>)> {
        if views.len() != self.scale_k {
            return Err(Error::shape(format!("model at K = {} got {} views", self.scale_k, views.len())));
        }
        let mut encoders = Vec::with_capacity(views.len());
        let mut blocks = Vec::with_capacity(views.len());
        for v in views {
            let (f, c) = self.encoder.forward(v)?;
            blocks.push(f);
            encoders.push(c);
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (out, c) = pepi_layer_forward(&l.pair, &blocks, l.activation)?;
            layers.push(c);
            blocks = out;
        }
        Ok((blocks, ModelCache { encoders, layers }))
    }

    /// Logits of the target view.
    pub fn forward(&self, views: &[&[T]]) -> Result<(Vec<T>, ModelCache<T>)> {
        let (blocks, cache) = self.forward_blocks(views)?;
        Ok((pi_readout(&blocks, self.target_index)?, cache))
    }

    pub fn predict(&self, views: &[&[T]]) -> Result<usize> {
        let (logits, _) = self.forward(views)?;
        Ok(argmax(&logits))
    }

    /// Zeroed gradient accumulators matching [`ScaledModel::param_arrays_mut`].
    pub fn grad_template(&self) -> Vec<Vec<f64>> {
        let mut g: Vec<Vec<f64>> = self
            .encoder
            .blocks()
            .iter()
            .flat_map(|b| [vec![0.0; b.kernels.len()], vec![0.0; b.bias.len()]])
            .collect();
        for l in &self.layers {
            let z = PairGrads::zeros(&l.pair);
            g.extend([z.s, z.o, z.bias]);
        }
        g
    }

    /// Parameter arrays in canonical order: per conv block kernels, bias; per PE/PI layer S, O, bias.
    pub fn param_arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in self.encoder.blocks_mut() {
            out.push(&mut b.kernels);
            out.push(&mut b.bias);
        }
        for l in &mut self.layers {
            out.extend(l.pair.arrays_mut());
        }
        out
    }

    pub fn param_arrays(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in self.encoder.blocks() {
            out.push(&b.kernels);
            out.push(&b.bias);
        }
        for l in &self.layers {
            out.extend([l.pair.s(), l.pair.o(), l.pair.bias()]);
        }
        out
    }

    /// Back-propagates `logit_grad` and adds parameter gradients into `grads`.
    pub fn backward_accumulate(&self, cache: &ModelCache<T>, logit_grad: &[T], grads: &mut [Vec<f64>]) -> Result<()> {
        let n_enc = self.encoder.grad_arrays();
        if grads.len() != n_enc + 3 * self.layers.len() {
            return Err(Error::shape("gradient accumulator does not match the model"));
        }
        let k = self.scale_k;
        let mut out_grads: Vec<Vec<T>> = vec![vec![T::zero(); self.classes()]; k];
        if logit_grad.len() != self.classes() {
            return Err(Error::shape(format!("expected {} logit gradients, got {}", self.classes(), logit_grad.len())));
        }
        out_grads[self.target_index] = logit_grad.to_vec();
        let (enc_grads, layer_grads) = grads.split_at_mut(n_enc);
        for (i, (l, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let slots = &mut layer_grads[3 * i..3 * i + 3];
            let mut acc = PairGrads {
                s: std::mem::take(&mut slots[0]),
                o: std::mem::take(&mut slots[1]),
                bias: std::mem::take(&mut slots[2]),
            };
            let res = backward_accumulate(&l.pair, c, &out_grads, &mut acc);
            slots[0] = acc.s;
            slots[1] = acc.o;
            slots[2] = acc.bias;
            out_grads = res?;
        }
        for (c, g) in cache.encoders.iter().zip(&out_grads) {
            self.encoder.backward_accumulate(c, g, enc_grads)?;
        }
        Ok(())
    }

    /// Softmax cross-entropy on one sample; gradients are added into `grads`.
    /// Returns `(loss, predicted class)`.
    pub fn loss_and_accumulate(&self, views: &[&[T]], label: usize, grads: &mut [Vec<f64>]) -> Result<(f64, usize)> {
        let (logits, cache) = self.forward(views)?;
        let xent = softmax_cross_entropy(&logits, label)?;
        self.backward_accumulate(&cache, &xent.logit_grad, grads)?;
        Ok((xent.loss, argmax(&logits)))
    }

    pub fn rescale(mut self, new_k: usize) -> Result<Self> {
        self.set_scale_k(new_k)?;
        Ok(self)
    }

    /// In-place form of [`ScaledModel::rescale`].
    pub fn set_scale_k(&mut self, new_k: usize) -> Result<()> {
        if new_k == 0 {
            return Err(Error::invalid("scale k must be >= 1"));
        }
        self.scale_k = new_k;
        if self.target_index >= new_k {
            self.target_index = 0;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ScaledModel<U> {
        ScaledModel {
            encoder: self.encoder.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| PepiLayer { pair: l.pair.cast(), activation: l.activation })
                .collect(),
            scale_k: self.scale_k,
            target_index: self.target_index,
        }
    }
}

pub fn rescale<T: Real>(model: ScaledModel<T>, new_k: usize) -> Result<ScaledModel<T>> {
    model.rescale(new_k)
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Trainable vs effective parameter counts at a given scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCountReport {
    pub k: usize,
    /// Encoder + `sum(2ab + a)` over PE/PI layers.
    pub trainable: u64,
    /// Encoder + `sum(a b K^2)` over PE/PI layers (weights only).
    pub effective: u64,
    pub ratio: f64,
    pub encoder: u64,
    pub pepi_trainable_weights: u64,
    pub pepi_effective_weights: u64,
}

impl ParamCountReport {
    /// Effective over trainable PE/PI weights, biases excluded: `K^2 / 2`.
    pub fn weight_ratio(&self) -> f64 {
        self.pepi_effective_weights as f64 / self.pepi_trainable_weights as f64
    }

    pub fn from_layer_dims(dims: &[(usize, usize)], encoder: u64, k: usize) -> Self {
        let (mut tw, mut bias, mut ew) = (0u64, 0u64, 0u64);
        for &(b, a) in dims {
            let ab = (a * b) as u64;
            tw += 2 * ab;
            bias += a as u64;
            ew += ab * (k * k) as u64;
        }
        let trainable = encoder + tw + bias;
        let effective = encoder + ew;
        Self {
            k,
            trainable,
            effective,
            ratio: effective as f64 / trainable as f64,
            encoder,
            pepi_trainable_weights: tw,
            pepi_effective_weights: ew,
        }
    }
}

pub fn count_parameters<T: Real>(model: &ScaledModel<T>, k: usize) -> ParamCountReport {
    let dims: Vec<(usize, usize)> = model.layers.iter().map(|l| (l.pair.in_dim(), l.pair.out_dim())).collect();
    ParamCountReport::from_layer_dims(&dims, model.encoder.param_count() as u64, k)
}
