use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::real::cast_vec;
use crate::nn::{ConvBlock, ConvCache, InitSpec, Real, Tensor};

/// Per-view feature extractor: a stack of conv blocks followed by flattening.
///
/// With no conv blocks the encoder is the identity on the flattened image.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    in_channels: usize,
    side: usize,
    blocks: Vec<ConvBlock<T>>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    blocks: Vec<ConvCache<T>>,
}

impl<T: Real> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        side: usize,
        channels: &[usize],
        init: InitSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(channels.len());
        let mut prev = in_channels;
        for &c in channels {
            blocks.push(ConvBlock::new(prev, c, init, rng)?);
            prev = c;
        }
        Self::from_blocks(in_channels, side, blocks)
    }

    pub fn from_blocks(in_channels: usize, side: usize, blocks: Vec<ConvBlock<T>>) -> Result<Self> {
        if in_channels == 0 || side == 0 {
            return Err(Error::invalid("encoder input must have >= 1 channel and side >= 1"));
        }
        let enc = Self { in_channels, side, blocks };
        enc.output_shape()?;
        Ok(enc)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.side * self.side
    }

    pub fn blocks(&self) -> &[ConvBlock<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ConvBlock<T>] {
        &mut self.blocks
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut shape = vec![self.in_channels, self.side, self.side];
        for b in &self.blocks {
            shape = b.output_shape(&shape)?.to_vec();
        }
        Ok(shape)
    }

    pub fn feature_dim(&self) -> usize {
        self.output_shape().map(|s| s.iter().product()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(ConvBlock::param_count).sum()
    }

    /// Number of gradient arrays (kernels, bias per block).
    pub fn grad_arrays(&self) -> usize {
        2 * self.blocks.len()
    }

    pub fn forward(&self, image: &[T]) -> Result<(Vec<T>, EncoderCache<T>)> {
        if image.len() != self.input_len() {
            return Err(Error::shape(format!(
                "encoder expects {} input values, got {}",
                self.input_len(),
                image.len()
            )));
        }
        let mut x = Tensor::new(vec![self.in_channels, self.side, self.side], image.to_vec())?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(&x)?;
            caches.push(c);
            x = y;
        }
        Ok((x.into_data(), EncoderCache { blocks: caches }))
    }

    /// Accumulates into `grads` (two arrays per block, in block order).
    pub fn backward_accumulate(&self, cache: &EncoderCache<T>, feature_grad: &[T], grads: &mut [Vec<f64>]) -> Result<()> {
        if grads.len() != self.grad_arrays() {
            return Err(Error::shape("encoder gradient accumulator has wrong arity"));
        }
        let mut g = feature_grad.to_vec();
        for (i, (block, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let (dk, rest) = grads[2 * i..2 * i + 2].split_at_mut(1);
            let din = block.backward_accumulate(c, &g, &mut dk[0], &mut rest[0], i > 0)?;
            if let Some(d) = din {
                g = d.into_data();
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Encoder<U> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                ConvBlock::from_parts(b.in_channels(), b.out_channels(), cast_vec(&b.kernels), cast_vec(&b.bias))
                    .expect("same shapes")
            })
            .collect();
        Encoder { in_channels: self.in_channels, side: self.side, blocks }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn mnist_feature_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::<f32>::new(1, 28, &[8, 16], InitSpec::FanIn, &mut rng).unwrap();
        assert_eq!(enc.output_shape().unwrap(), vec![16, 4, 4]);
        assert_eq!(enc.feature_dim(), 256);
        assert_eq!(enc.param_count(), 8 * 25 + 8 + 16 * 8 * 25 + 16);
    }

    #[test]
    fn empty_encoder_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::<f32>::new(1, 4, &[], InitSpec::FanIn, &mut rng).unwrap();
        let img: Vec<f32> = (0..16).map(|v| v as f32).collect();
        assert_eq!(enc.forward(&img).unwrap().0, img);
    }

    #[test]
    fn too_many_blocks_for_the_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(Encoder::<f32>::new(1, 12, &[2, 2], InitSpec::FanIn, &mut rng).is_err());
    }
}
