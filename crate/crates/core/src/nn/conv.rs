use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{InitSpec, Real, Tensor};

/// Square kernel side of every convolution.
pub const KERNEL: usize = 5;
const POOL: usize = 2;

/// Side length after a valid `KERNEL x KERNEL` convolution with stride 1.
pub fn conv_output_side(side: usize) -> Option<usize> {
    side.checked_sub(KERNEL).map(|d| d + 1)
}

/// Side length after 2x2 max-pooling with stride 2 (trailing odd row/column dropped).
pub fn pool_output_side(side: usize) -> usize {
    side / POOL
}

/// Valid 5x5 convolution, then 2x2/2 max-pool, then ReLU.
///
/// Kernels are stored `[out_ch][in_ch][5][5]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    in_ch: usize,
    out_ch: usize,
    pub kernels: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: Tensor<T>,
    conv_side: (usize, usize),
    /// Flat index into the conv output chosen by each pooled cell.
    argmax: Vec<u32>,
    /// Pooled values before ReLU.
    pooled: Vec<T>,
}

impl<T: Real> ConvBlock<T> {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, init: InitSpec, rng: &mut R) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::invalid(format!("conv channels must be >= 1, got {in_ch}->{out_ch}")));
        }
        let mut kernels = vec![T::zero(); out_ch * in_ch * KERNEL * KERNEL];
        init.fill(in_ch * KERNEL * KERNEL, &mut kernels, rng);
        Ok(Self { in_ch, out_ch, kernels, bias: vec![T::zero(); out_ch] })
    }

    pub fn from_parts(in_ch: usize, out_ch: usize, kernels: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::invalid("conv channels must be >= 1"));
        }
        if kernels.len() != out_ch * in_ch * KERNEL * KERNEL || bias.len() != out_ch {
            return Err(Error::shape(format!(
                "conv {in_ch}->{out_ch}: got {} kernel values and {} biases",
                kernels.len(),
                bias.len()
            )));
        }
        Ok(Self { in_ch, out_ch, kernels, bias })
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }

    /// Output shape `[out_ch, h', w']` for an input of `[in_ch, h, w]`.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<[usize; 3]> {
        let [c, h, w] = match input_shape {
            &[c, h, w] => [c, h, w],
            _ => return Err(Error::shape(format!("conv expects [C, H, W], got {input_shape:?}"))),
        };
        if c != self.in_ch {
            return Err(Error::shape(format!("conv expects {} channels, got {c}", self.in_ch)));
        }
        let (Some(ch), Some(cw)) = (conv_output_side(h), conv_output_side(w)) else {
            return Err(Error::shape(format!("{h}x{w} input is smaller than the {KERNEL}x{KERNEL} kernel")));
        };
        let (ph, pw) = (pool_output_side(ch), pool_output_side(cw));
        if ph == 0 || pw == 0 {
            return Err(Error::shape(format!("{ch}x{cw} conv output is too small to pool")));
        }
        Ok([self.out_ch, ph, pw])
    }

    /// Raw valid convolution (no pooling, no activation), `[out_ch, h-4, w-4]`.
    pub fn convolve(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.output_shape(input.shape())?;
        let (h, w) = (input.shape()[1], input.shape()[2]);
        let (oh, ow) = (h - KERNEL + 1, w - KERNEL + 1);
        let x = input.data();
        let mut out = vec![T::zero(); self.out_ch * oh * ow];
        for (oc, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
            plane.iter_mut().for_each(|v| *v = self.bias[oc]);
            for ic in 0..self.in_ch {
                let src = &x[ic * h * w..(ic + 1) * h * w];
                let k = &self.kernels[(oc * self.in_ch + ic) * KERNEL * KERNEL..][..KERNEL * KERNEL];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let wgt = k[ky * KERNEL + kx];
                        for y in 0..oh {
                            let row_in = &src[(y + ky) * w + kx..][..ow];
                            let row_out = &mut plane[y * ow..][..ow];
                            for (o, &i) in row_out.iter_mut().zip(row_in) {
                                *o += wgt * i;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![self.out_ch, oh, ow], out)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let [_, ph, pw] = self.output_shape(input.shape())?;
        let conv = self.convolve(input)?;
        let (oh, ow) = (conv.shape()[1], conv.shape()[2]);
        let c = conv.data();
        let mut argmax = Vec::with_capacity(self.out_ch * ph * pw);
        let mut pooled = Vec::with_capacity(self.out_ch * ph * pw);
        for oc in 0..self.out_ch {
            let base = oc * oh * ow;
            for py in 0..ph {
                for px in 0..pw {
                    let (y0, x0) = (py * POOL, px * POOL);
                    let mut best = base + y0 * ow + x0;
                    // row-major scan; strict comparison keeps the first maximum
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (y0 + dy) * ow + x0 + dx;
                        if c[idx] > c[best] {
                            best = idx;
                        }
                    }
                    argmax.push(best as u32);
                    pooled.push(c[best]);
                }
            }
        }
        let out = pooled.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let cache = ConvCache { input: input.clone(), conv_side: (oh, ow), argmax, pooled };
        Ok((Tensor::new(vec![self.out_ch, ph, pw], out)?, cache))
    }

    /// Adds parameter gradients into `dk`/`db`; returns the input gradient when requested.
    pub fn backward_accumulate(
        &self,
        cache: &ConvCache<T>,
        out_grad: &[T],
        dk: &mut [f64],
        db: &mut [f64],
        want_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        if out_grad.len() != cache.pooled.len() {
            return Err(Error::shape(format!(
                "conv backward expects {} gradient values, got {}",
                cache.pooled.len(),
                out_grad.len()
            )));
        }
        if dk.len() != self.kernels.len() || db.len() != self.out_ch {
            return Err(Error::shape("conv gradient accumulator has wrong size"));
        }
        let (h, w) = (cache.input.shape()[1], cache.input.shape()[2]);
        let (oh, ow) = cache.conv_side;
        let x = cache.input.data();
        let mut din = want_input_grad.then(|| vec![T::zero(); x.len()]);
        let per_channel = cache.pooled.len() / self.out_ch;
        for (cell, (&g, &pre)) in out_grad.iter().zip(&cache.pooled).enumerate() {
            if pre <= T::zero() || g == T::zero() {
                continue;
            }
            let oc = cell / per_channel;
            let pos = cache.argmax[cell] as usize - oc * oh * ow;
            let (y, xx) = (pos / ow, pos % ow);
            let gf = g.as_f64();
            db[oc] += gf;
            for ic in 0..self.in_ch {
                let kbase = (oc * self.in_ch + ic) * KERNEL * KERNEL;
                let src = &x[ic * h * w..(ic + 1) * h * w];
                for ky in 0..KERNEL {
                    let row = &src[(y + ky) * w + xx..][..KERNEL];
                    let dk_row = &mut dk[kbase + ky * KERNEL..][..KERNEL];
                    for (d, &v) in dk_row.iter_mut().zip(row) {
                        *d += gf * v.as_f64();
                    }
                    if let Some(din) = din.as_mut() {
                        let k_row = &self.kernels[kbase + ky * KERNEL..][..KERNEL];
                        let din_row = &mut din[ic * h * w + (y + ky) * w + xx..][..KERNEL];
                        for (d, &kv) in din_row.iter_mut().zip(k_row) {
                            *d += g * kv;
                        }
                    }
                }
            }
        }
        din.map(|d| Tensor::new(cache.input.shape().to_vec(), d)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::finite_diff_check;

    #[test]
    fn zero_kernels_give_zero_maps() {
        let block = ConvBlock::<f32>::from_parts(1, 2, vec![0.0; 50], vec![0.0; 2]).unwrap();
        let img = Tensor::new(vec![1, 8, 8], (0..64).map(|v| v as f32).collect()).unwrap();
        let (out, _) = block.forward(&img).unwrap();
        assert_eq!(out.shape(), &[2, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mnist_shape_algebra() {
        assert_eq!(conv_output_side(28), Some(24));
        assert_eq!(pool_output_side(24), 12);
        assert_eq!(conv_output_side(12), Some(8));
        assert_eq!(pool_output_side(8), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = ConvBlock::<f32>::new(1, 8, InitSpec::FanIn, &mut rng).unwrap();
        let conv = block.convolve(&Tensor::zeros(vec![1, 28, 28])).unwrap();
        assert_eq!(conv.shape(), &[8, 24, 24]);
        assert_eq!(block.output_shape(&[1, 28, 28]).unwrap(), [8, 12, 12]);
        for n in 5..40 {
            assert_eq!(conv_output_side(n), Some(n - 4));
            assert_eq!(pool_output_side(n - 4), (n - 4) / 2);
        }
    }

    #[test]
    fn too_small_input_is_a_shape_error() {
        let block = ConvBlock::<f32>::from_parts(1, 1, vec![0.0; 25], vec![0.0]).unwrap();
        assert!(matches!(block.forward(&Tensor::zeros(vec![1, 4, 9])), Err(Error::Shape(_))));
        assert!(matches!(block.forward(&Tensor::zeros(vec![2, 9, 9])), Err(Error::Shape(_))));
    }

    /// Brute-force 2-D correlation used as an independent reference.
    fn correlate(img: &[f64], side: usize, k: &[f64]) -> Vec<f64> {
        let o = side - KERNEL + 1;
        let mut out = vec![0.0; o * o];
        for y in 0..o {
            for x in 0..o {
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        out[y * o + x] += img[(y + ky) * side + x + kx] * k[ky * KERNEL + kx];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn center_tap_crops_interior() {
        let mut k = vec![0.0; 25];
        k[12] = 1.0;
        let ramp: Vec<f64> = (0..36).map(|v| v as f64).collect();
        let block = ConvBlock::<f64>::from_parts(1, 1, k.clone(), vec![0.0]).unwrap();
        let conv = block.convolve(&Tensor::new(vec![1, 6, 6], ramp.clone()).unwrap()).unwrap();
        // interior of a 6x6 ramp after cropping 2 pixels on each side
        assert_eq!(conv.data(), &[14.0, 15.0, 20.0, 21.0]);
        assert_eq!(conv.data(), correlate(&ramp, 6, &k).as_slice());
    }

    #[test]
    fn convolution_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let block = ConvBlock::<f64>::new(1, 1, InitSpec::Uniform { r: 1.0 }, &mut rng).unwrap();
        let img: Vec<f64> = (0..81).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let conv = block.convolve(&Tensor::new(vec![1, 9, 9], img.clone()).unwrap()).unwrap();
        let reference = correlate(&img, 9, &block.kernels);
        for (a, b) in conv.data().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pooling_ties_pick_first_in_scan_order() {
        // all conv outputs equal -> argmax is the top-left cell of each window
        let block = ConvBlock::<f32>::from_parts(1, 1, vec![0.0; 25], vec![1.0]).unwrap();
        let (_, cache) = block.forward(&Tensor::zeros(vec![1, 8, 8])).unwrap();
        assert_eq!(cache.argmax, vec![0, 2, 8, 10]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (in_ch, out_ch, side) = (2, 3, 9);
        let block = ConvBlock::<f64>::new(in_ch, out_ch, InitSpec::Uniform { r: 0.5 }, &mut rng).unwrap();
        let img: Vec<f64> = (0..in_ch * side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
        let input = Tensor::new(vec![in_ch, side, side], img.clone()).unwrap();
        let (out, cache) = block.forward(&input).unwrap();
        let upstream: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |b: &ConvBlock<f64>, x: &Tensor<f64>| {
            let (y, _) = b.forward(x).unwrap();
            y.data().iter().zip(&upstream).map(|(a, u)| a * u).sum::<f64>()
        };
        let mut dk = vec![0.0; block.kernels.len()];
        let mut db = vec![0.0; out_ch];
        let din = block.backward_accumulate(&cache, &upstream, &mut dk, &mut db, true).unwrap().unwrap();

        let mut params = block.kernels.clone();
        params.extend(&block.bias);
        dk.extend(&db);
        let nk = block.kernels.len();
        let report = finite_diff_check(
            |p| {
                let b = ConvBlock::from_parts(in_ch, out_ch, p[..nk].to_vec(), p[nk..].to_vec()).unwrap();
                loss(&b, &input)
            },
            &params,
            &dk,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "{report:?}");

        let report = finite_diff_check(
            |p| loss(&block, &Tensor::new(vec![in_ch, side, side], p.to_vec()).unwrap()),
            &img,
            din.data(),
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "{report:?}");
    }
}
