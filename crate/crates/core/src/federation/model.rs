use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{GlobalParams, LayerParams};
use crate::nn::{
    clip_global_norm, softmax_cross_entropy, sgd_step, Activation, ConvBlock, Dense, DenseCache, Encoder, EncoderCache, InitSpec, Real,
    SgdSchedule, KERNEL,
};
use crate::pepi::{count_parameters, ArchSpec, PepiLayer, ScaledModel, SubMatrixPair};

/// Which model family a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// One client, local view only, no aggregation.
    Baseline1,
    /// Local view only, FedAvg across clients.
    Baseline2,
    /// Large dense network over a fixed number of view slots, zero padded.
    Baseline3,
    /// PE/PI network scaled to each client's neighbourhood.
    Proposed,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline1, Method::Baseline2, Method::Baseline3, Method::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline1 => "baseline1",
            Method::Baseline2 => "baseline2",
            Method::Baseline3 => "baseline3",
            Method::Proposed => "proposed",
        }
    }

    pub fn aggregates(self) -> bool {
        self != Method::Baseline1
    }

    /// Scale a client with `topology_k` views actually runs at.
    pub fn model_scale(self, topology_k: usize) -> usize {
        match self {
            Method::Baseline1 | Method::Baseline2 => 1,
            Method::Baseline3 | Method::Proposed => topology_k,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Dense head over `slots` concatenated view features; views beyond the
/// client's own count are zero images.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedDenseModel<T> {
    encoder: Encoder<T>,
    layers: Vec<(Dense<T>, Activation)>,
    slots: usize,
    active_views: usize,
}

struct PaddedCache<T> {
    encoders: Vec<EncoderCache<T>>,
    zero: Option<EncoderCache<T>>,
    layers: Vec<DenseCache<T>>,
}

impl<T: Real> PaddedDenseModel<T> {
    /// Hidden widths are `slots x` the per-block widths of `arch`.
    pub fn new<R: Rng + ?Sized>(arch: &ArchSpec, slots: usize, active_views: usize, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        if slots == 0 {
            return Err(Error::invalid("padded model needs at least one view slot"));
        }
        let encoder = Encoder::new(arch.in_channels, arch.side, &arch.conv_channels, InitSpec::LeCun, rng)?;
        let mut prev = encoder.feature_dim() * slots;
        let mut layers = Vec::new();
        for &h in &arch.hidden {
            layers.push((Dense::new(prev, h * slots, InitSpec::LeCun, rng)?, Activation::Relu));
            prev = h * slots;
        }
        layers.push((Dense::new(prev, arch.classes, InitSpec::LeCun, rng)?, Activation::Identity));
        let mut m = Self { encoder, layers, slots, active_views: 1 };
        m.set_active_views(active_views)?;
        Ok(m)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn active_views(&self) -> usize {
        self.active_views
    }

    pub fn set_active_views(&mut self, k: usize) -> Result<()> {
        if k == 0 || k > self.slots {
            return Err(Error::invalid(format!("padded model has {} slots, cannot run {k} views", self.slots)));
        }
        self.active_views = k;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.layers.iter().map(|(d, _)| d.param_count()).sum::<usize>()
    }

    fn forward(&self, views: &[&[T]]) -> Result<(Vec<T>, PaddedCache<T>)> {
        if views.len() != self.active_views {
            return Err(Error::shape(format!("padded model expects {} views, got {}", self.active_views, views.len())));
        }
        let mut features = Vec::with_capacity(self.encoder.feature_dim() * self.slots);
        let mut encoders = Vec::with_capacity(views.len());
        for v in views {
            let (f, c) = self.encoder.forward(v)?;
            features.extend(f);
            encoders.push(c);
        }
        let mut zero = None;
        if self.active_views < self.slots {
            // every padded slot sees the same all-zero image
            let (f, c) = self.encoder.forward(&vec![T::zero(); self.encoder.input_len()])?;
            for _ in self.active_views..self.slots {
                features.extend_from_slice(&f);
            }
            zero = Some(c);
        }
        let mut x = features;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (d, act) in &self.layers {
            let (y, c) = d.forward(&x, *act)?;
            layers.push(c);
            x = y;
        }
        Ok((x, PaddedCache { encoders, zero, layers }))
    }

    fn backward_accumulate(&self, cache: &PaddedCache<T>, logit_grad: &[T], grads: &mut [Vec<f64>]) -> Result<()> {
        let n_enc = self.encoder.grad_arrays();
        let (enc_grads, head) = grads.split_at_mut(n_enc);
        let mut g = logit_grad.to_vec();
        for (i, ((d, _), c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let (dw, db) = head[2 * i..2 * i + 2].split_at_mut(1);
            g = d.backward_accumulate(c, &g, &mut dw[0], &mut db[0])?;
        }
        let fd = self.encoder.feature_dim();
        for (v, c) in cache.encoders.iter().enumerate() {
            self.encoder.backward_accumulate(c, &g[v * fd..(v + 1) * fd], enc_grads)?;
        }
        if let Some(zc) = &cache.zero {
            // backward is linear in the upstream gradient, so padded slots share one pass
            let mut sum = vec![T::zero(); fd];
            for v in self.active_views..self.slots {
                for (s, &x) in sum.iter_mut().zip(&g[v * fd..(v + 1) * fd]) {
                    *s += x;
                }
            }
            self.encoder.backward_accumulate(zc, &sum, enc_grads)?;
        }
        Ok(())
    }

    fn param_arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in self.encoder.blocks_mut() {
            out.push(&mut b.kernels);
            out.push(&mut b.bias);
        }
        for (d, _) in &mut self.layers {
            out.push(&mut d.weights);
            out.push(&mut d.bias);
        }
        out
    }

    fn grad_template(&self) -> Vec<Vec<f64>> {
        let mut g: Vec<Vec<f64>> = self
            .encoder
            .blocks()
            .iter()
            .flat_map(|b| [vec![0.0; b.kernels.len()], vec![0.0; b.bias.len()]])
            .collect();
        for (d, _) in &self.layers {
            g.push(vec![0.0; d.weights.len()]);
            g.push(vec![0.0; d.bias.len()]);
        }
        g
    }
}

/// The model a client trains, whichever method is in use.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Scalable(ScaledModel<f32>),
    Padded(PaddedDenseModel<f32>),
}

fn encoder_params(enc: &Encoder<f32>) -> Vec<LayerParams> {
    enc.blocks()
        .iter()
        .map(|b| LayerParams::Conv {
            in_ch: b.in_channels() as u32,
            out_ch: b.out_channels() as u32,
            kernel: KERNEL as u32,
            weights: b.kernels.clone(),
            bias: b.bias.clone(),
        })
        .collect()
}

impl Network {
    /// Builds the model for `method`; `max_views` sizes the padded baseline.
    pub fn new<R: Rng + ?Sized>(method: Method, arch: &ArchSpec, max_views: usize, rng: &mut R) -> Result<Self> {
        Ok(match method {
            Method::Baseline3 => Network::Padded(PaddedDenseModel::new(arch, max_views, 1, rng)?),
            _ => Network::Scalable(ScaledModel::new(arch, 1, rng)?),
        })
    }

    pub fn scale(&self) -> usize {
        match self {
            Network::Scalable(m) => m.scale_k(),
            Network::Padded(m) => m.active_views(),
        }
    }

    /// Changes the number of views; parameters are untouched.
    pub fn rescale(&mut self, k: usize) -> Result<()> {
        match self {
            Network::Scalable(m) => m.set_scale_k(k),
            Network::Padded(m) => m.set_active_views(k),
        }
    }

    pub fn trainable_params(&self) -> usize {
        match self {
            Network::Scalable(m) => count_parameters(m, m.scale_k()).trainable as usize,
            Network::Padded(m) => m.param_count(),
        }
    }

    pub fn to_params(&self) -> GlobalParams {
        let layers = match self {
            Network::Scalable(m) => {
                let mut l = encoder_params(m.encoder());
                l.extend(m.layers().iter().map(|p| LayerParams::Pepi {
                    in_dim: p.pair.in_dim() as u32,
                    out_dim: p.pair.out_dim() as u32,
                    s: p.pair.s().to_vec(),
                    o: p.pair.o().to_vec(),
                    bias: p.pair.bias().to_vec(),
                }));
                l
            }
            Network::Padded(m) => {
                let mut l = encoder_params(&m.encoder);
                l.extend(m.layers.iter().map(|(d, _)| LayerParams::Dense {
                    in_dim: d.in_dim() as u32,
                    out_dim: d.out_dim() as u32,
                    weights: d.weights.clone(),
                    bias: d.bias.clone(),
                }));
                l
            }
        };
        GlobalParams { layers }
    }

    /// Overwrites every parameter with `params`, which must match this model's shapes.
    pub fn load_params(&mut self, params: &GlobalParams) -> Result<()> {
        self.to_params().check_same_shape(params)?;
        let n_enc = match self {
            Network::Scalable(m) => m.encoder().blocks().len(),
            Network::Padded(m) => m.encoder.blocks().len(),
        };
        let (enc_layers, head_layers) = params.layers.split_at(n_enc);
        let enc = match self {
            Network::Scalable(m) => m.encoder_mut(),
            Network::Padded(m) => &mut m.encoder,
        };
        for (b, p) in enc.blocks_mut().iter_mut().zip(enc_layers) {
            if let LayerParams::Conv { in_ch, out_ch, weights, bias, .. } = p {
                *b = ConvBlock::from_parts(*in_ch as usize, *out_ch as usize, weights.clone(), bias.clone())?;
            }
        }
        match self {
            Network::Scalable(m) => {
                for (l, p) in m.layers_mut().iter_mut().zip(head_layers) {
                    if let LayerParams::Pepi { in_dim, out_dim, s, o, bias } = p {
                        *l = PepiLayer {
                            pair: SubMatrixPair::from_parts(
                                *in_dim as usize,
                                *out_dim as usize,
                                s.clone(),
                                o.clone(),
                                bias.clone(),
                            )?,
                            activation: l.activation,
                        };
                    }
                }
            }
            Network::Padded(m) => {
                for ((d, _), p) in m.layers.iter_mut().zip(head_layers) {
                    if let LayerParams::Dense { in_dim, out_dim, weights, bias } = p {
                        *d = Dense::from_parts(*in_dim as usize, *out_dim as usize, weights.clone(), bias.clone())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grad_template(&self) -> Vec<Vec<f64>> {
        match self {
            Network::Scalable(m) => m.grad_template(),
            Network::Padded(m) => m.grad_template(),
        }
    }

    /// Forward + backward on one sample. Returns `(loss, predicted class)`.
    pub fn loss_and_accumulate(&self, views: &[&[f32]], label: usize, grads: &mut [Vec<f64>]) -> Result<(f64, usize)> {
        match self {
            Network::Scalable(m) => m.loss_and_accumulate(views, label, grads),
            Network::Padded(m) => {
                let (logits, cache) = m.forward(views)?;
                let x = softmax_cross_entropy(&logits, label)?;
                m.backward_accumulate(&cache, &x.logit_grad, grads)?;
                Ok((x.loss, crate::pepi::argmax(&logits)))
            }
        }
    }

    /// Loss and predicted class without gradients.
    pub fn evaluate(&self, views: &[&[f32]], label: usize) -> Result<(f64, usize)> {
        let logits = match self {
            Network::Scalable(m) => m.forward(views)?.0,
            Network::Padded(m) => m.forward(views)?.0,
        };
        let x = softmax_cross_entropy(&logits, label)?;
        Ok((x.loss, crate::pepi::argmax(&logits)))
    }

    /// One SGD step with the batch-mean gradient `grads / batch_len`, optionally
    /// clipped to a global L2 norm of `clip_norm`.
    pub fn apply_gradients(
        &mut self,
        grads: &mut [Vec<f64>],
        batch_len: usize,
        schedule: &SgdSchedule,
        clip_norm: Option<f64>,
    ) -> Result<()> {
        let inv = 1.0 / batch_len.max(1) as f64;
        grads.iter_mut().flatten().for_each(|v| *v *= inv);
        if let Some(max) = clip_norm {
            clip_global_norm(grads, max);
        }
        let arrays = match self {
            Network::Scalable(m) => m.param_arrays_mut(),
            Network::Padded(m) => m.param_arrays_mut(),
        };
        if arrays.len() != grads.len() {
            return Err(Error::shape("gradient set does not match the model"));
        }
        for (p, g) in arrays.into_iter().zip(grads.iter_mut()) {
            sgd_step(p, g, schedule)?;
            crate::nn::check_finite("parameters", p)?;
        }
        Ok(())
    }
}
