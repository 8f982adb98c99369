//! Datasets, partitioning, AWGN and multi-view sample construction.

mod idx;
mod multiview;
mod noise;
mod partition;
mod synth;

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use multiview::{make_multiview_batch, MultiViewDataset, MultiViewSample};
pub use noise::{add_awgn, NoiseSpec};
pub use partition::{partition_disjoint, partition_indices};
pub use synth::synth_blobs;

use crate::error::{Error, Result};

/// Single-channel images (row-major, `N x H x W`) with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    height: usize,
    width: usize,
    classes: usize,
    images: Vec<f32>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(height: usize, width: usize, classes: usize, images: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be >= 1"));
        }
        if images.len() != labels.len() * height * width {
            return Err(Error::Consistency(format!(
                "{} labels but {} pixels ({}x{} each)",
                labels.len(),
                images.len(),
                height,
                width
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::Consistency(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self { height, width, classes, images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels_per_image(&self) -> usize {
        self.height * self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.pixels_per_image();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// New dataset holding `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let n = self.pixels_per_image();
        let mut images = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Dataset { height: self.height, width: self.width, classes: self.classes, images, labels }
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}
