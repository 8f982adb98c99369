use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_header<R: Read>(r: &mut R, expected: u32, what: &str) -> Result<()> {
    let magic = r.read_u32::<BigEndian>().map_err(|e| eof(e, what))?;
    if magic != expected {
        return Err(Error::Format(format!("{what}: magic {magic} (0x{magic:08x}), expected {expected}")));
    }
    Ok(())
}

fn eof(e: std::io::Error, what: &str) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated(format!("{what} ended early"))
    } else {
        Error::Io(e)
    }
}

/// Parses an IDX3 image file; returns `(count, rows, cols, pixels / 255)`.
pub fn read_idx_images<R: Read>(mut r: R) -> Result<(usize, usize, usize, Vec<f32>)> {
    read_header(&mut r, IDX_IMAGES_MAGIC, "image file")?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.read_u32::<BigEndian>().map_err(|e| eof(e, "image header"))? as usize;
    }
    let [n, rows, cols] = dims;
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("image file declares {rows}x{cols} images")));
    }
    let mut raw = vec![0u8; n * rows * cols];
    r.read_exact(&mut raw).map_err(|e| eof(e, "image payload"))?;
    Ok((n, rows, cols, raw.into_iter().map(|b| b as f32 / 255.0).collect()))
}

pub fn read_idx_labels<R: Read>(mut r: R) -> Result<Vec<u8>> {
    read_header(&mut r, IDX_LABELS_MAGIC, "label file")?;
    let n = r.read_u32::<BigEndian>().map_err(|e| eof(e, "label header"))? as usize;
    let mut raw = vec![0u8; n];
    r.read_exact(&mut raw).map_err(|e| eof(e, "label payload"))?;
    Ok(raw)
}

/// Loads an image/label IDX pair; pixels are scaled to `[0, 1]`, 10 classes.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (n, rows, cols, pixels) = read_idx_images(BufReader::new(File::open(images_path)?))?;
    let labels = read_idx_labels(BufReader::new(File::open(labels_path)?))?;
    if labels.len() != n {
        return Err(Error::Consistency(format!("{n} images but {} labels", labels.len())));
    }
    Dataset::new(rows, cols, 10, pixels, labels)
}

/// Writes a dataset as an IDX pair; pixels are clamped to `[0, 1]` and quantized.
pub fn write_idx(dataset: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(images_path)?);
    w.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    for d in [dataset.len(), dataset.height(), dataset.width()] {
        w.write_u32::<BigEndian>(d as u32)?;
    }
    for i in 0..dataset.len() {
        let bytes: Vec<u8> = dataset.image(i).iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(labels_path)?);
    w.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    w.write_u32::<BigEndian>(dataset.len() as u32)?;
    w.write_all(dataset.labels())?;
    w.flush()?;
    Ok(())
}
