use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;

use crate::data::{add_awgn, Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// One item seen as `K` independently-noised views; view 0 is the local one.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewSample {
    pub views: Vec<Vec<f32>>,
    pub label: usize,
}

/// Expands every sample into `k` independently-noised copies of the same image.
pub fn make_multiview_batch<R: Rng + ?Sized>(
    samples: &Dataset,
    k: usize,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<Vec<MultiViewSample>> {
    if k == 0 {
        return Err(Error::invalid("need at least one view"));
    }
    Ok((0..samples.len())
        .map(|i| MultiViewSample {
            views: (0..k).map(|_| add_awgn(samples.image(i), spec, rng)).collect(),
            label: samples.label(i),
        })
        .collect())
}

const CACHE_MAGIC: &[u8; 4] = b"PEPD";
const CACHE_VERSION: u32 = 1;

/// Prepared multi-view data: every sample carries `views` noisy copies, of
/// which a client at scale `K` uses the first `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    height: usize,
    width: usize,
    classes: usize,
    views: usize,
    data: Vec<f32>,
    labels: Vec<u8>,
}

impl MultiViewDataset {
    /// Noise for sample `i` is drawn from a stream derived from `(seed, i)`.
    pub fn prepare(dataset: &Dataset, views: usize, spec: &NoiseSpec, seed: u64) -> Result<Self> {
        if views == 0 {
            return Err(Error::invalid("need at least one view"));
        }
        let px = dataset.pixels_per_image();
        let mut data = Vec::with_capacity(dataset.len() * views * px);
        for i in 0..dataset.len() {
            let one = dataset.select(&[i]);
            let mut rng = rng_for(seed, &[i as u64]);
            for s in make_multiview_batch(&one, views, spec, &mut rng)? {
                for v in s.views {
                    data.extend(v);
                }
            }
        }
        Ok(Self {
            height: dataset.height(),
            width: dataset.width(),
            classes: dataset.classes(),
            views,
            data,
            labels: dataset.labels().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn side(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn view(&self, i: usize, v: usize) -> &[f32] {
        assert!(v < self.views, "view {v} out of range");
        let px = self.pixels();
        let start = (i * self.views + v) * px;
        &self.data[start..start + px]
    }

    /// The first `k` views of sample `i`.
    pub fn sample_views(&self, i: usize, k: usize) -> Result<Vec<&[f32]>> {
        if k > self.views {
            return Err(Error::invalid(format!("{k} views requested, {} prepared", self.views)));
        }
        Ok((0..k).map(|v| self.view(i, v)).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        for d in [self.len(), self.views, self.height, self.width, self.classes] {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        w.write_all(&self.labels)?;
        for &v in &self.data {
            w.write_f32::<LittleEndian>(v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let trunc = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated("prepared dataset ended early".into())
            } else {
                Error::Io(e)
            }
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format(format!("bad prepared-dataset magic {magic:?}")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(trunc)?;
        if version > CACHE_VERSION {
            return Err(Error::Version { found: version, supported: CACHE_VERSION });
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        }
        let [n, views, height, width, classes] = dims;
        let mut labels = vec![0u8; n];
        r.read_exact(&mut labels).map_err(trunc)?;
        let mut data = vec![0f32; n * views * height * width];
        r.read_f32_into::<LittleEndian>(&mut data).map_err(trunc)?;
        if labels.iter().any(|&l| l as usize >= classes) {
            return Err(Error::Consistency("label outside class range".into()));
        }
        Ok(Self { height, width, classes, views, data, labels })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(2, 2, 10, vec![0.1, 0.5, 0.9, 0.3, 1.0, 0.0, 0.0, 0.4], vec![4, 9]).unwrap()
    }

    #[test]
    fn views_share_label_and_differ_in_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = make_multiview_batch(&tiny(), 3, &NoiseSpec::new(-10.0), &mut rng).unwrap();
        assert_eq!(batch.len(), 2);
        for (s, want) in batch.iter().zip([4, 9]) {
            assert_eq!(s.label, want);
            assert_eq!(s.views.len(), 3);
            for a in 0..3 {
                for b in a + 1..3 {
                    assert_ne!(s.views[a], s.views[b]);
                }
            }
        }
    }

    #[test]
    fn single_view_and_zero_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = make_multiview_batch(&tiny(), 1, &NoiseSpec::new(-10.0), &mut rng).unwrap();
        assert_eq!(b[0].views.len(), 1);
        assert!(make_multiview_batch(&tiny(), 0, &NoiseSpec::new(-10.0), &mut rng).is_err());
    }

    #[test]
    fn seeded_batches_are_identical() {
        let spec = NoiseSpec::new(-10.0);
        let a = make_multiview_batch(&tiny(), 2, &spec, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = make_multiview_batch(&tiny(), 2, &spec, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prepared_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = MultiViewDataset::prepare(&tiny(), 3, &NoiseSpec::new(0.0), 11).unwrap();
        let path = dir.path().join("c.bin");
        ds.save(&path).unwrap();
        assert_eq!(MultiViewDataset::load(&path).unwrap(), ds);
        assert_eq!(ds.sample_views(1, 2).unwrap().len(), 2);
        assert!(ds.sample_views(1, 4).is_err());

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(MultiViewDataset::load(&path), Err(Error::Truncated(_))));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(MultiViewDataset::load(&path), Err(Error::Format(_))));
    }
}
