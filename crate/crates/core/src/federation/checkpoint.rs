//! Binary checkpoint of a [`GlobalParams`] set.
//!
//! ```text
//! "PEPI" | version u32 | layer count u32 |
//!   per layer: kind u8 | dims u32... | arrays as f32, row-major
//! ```
//!
//! All integers and floats are little-endian. Kinds: 0 conv (dims
//! `in_ch, out_ch, kh, kw`; kernels then bias), 1 dense (dims `in, out`;
//! weights then bias), 2 PE/PI (dims `in, out`; `S`, `O`, bias).

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::federation::{GlobalParams, LayerParams};

pub const MAGIC: &[u8; 4] = b"PEPI";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &GlobalParams, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(params.layers.len() as u32)?;
    for layer in &params.layers {
        w.write_u8(layer.kind_tag())?;
        for d in layer.dims() {
            w.write_u32::<LittleEndian>(d)?;
        }
        for arr in layer.arrays() {
            for &v in arr {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
    }
    Ok(())
}

pub fn to_bytes(params: &GlobalParams) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 4 * params.payload_len() + 20 * params.layers.len());
    write_checkpoint(params, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated("checkpoint ended early".into())
    } else {
        Error::Io(e)
    }
}

fn read_floats<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut v = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut v).map_err(truncated)?;
    Ok(v)
}

fn read_dims<R: Read, const N: usize>(r: &mut R) -> Result<[u32; N]> {
    let mut d = [0u32; N];
    for x in &mut d {
        *x = r.read_u32::<LittleEndian>().map_err(truncated)?;
    }
    Ok(d)
}

pub fn from_bytes(bytes: &[u8]) -> Result<GlobalParams> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version > VERSION {
        return Err(Error::Version { found: version, supported: VERSION });
    }
    if version == 0 {
        return Err(Error::Format("checkpoint version 0 is invalid".into()));
    }
    let count = r.read_u32::<LittleEndian>().map_err(truncated)?;
    let mut layers = Vec::new();
    for i in 0..count {
        let tag = r.read_u8().map_err(truncated)?;
        let layer = match tag {
            0 => {
                let [in_ch, out_ch, kh, kw] = read_dims::<_, 4>(&mut r)?;
                if kh != kw {
                    return Err(Error::Format(format!("layer {i}: non-square kernel {kh}x{kw}")));
                }
                let n = in_ch as usize * out_ch as usize * kh as usize * kw as usize;
                LayerParams::Conv {
                    in_ch,
                    out_ch,
                    kernel: kh,
                    weights: read_floats(&mut r, n)?,
                    bias: read_floats(&mut r, out_ch as usize)?,
                }
            }
            1 => {
                let [in_dim, out_dim] = read_dims::<_, 2>(&mut r)?;
                let n = in_dim as usize * out_dim as usize;
                LayerParams::Dense {
                    in_dim,
                    out_dim,
                    weights: read_floats(&mut r, n)?,
                    bias: read_floats(&mut r, out_dim as usize)?,
                }
            }
            2 => {
                let [in_dim, out_dim] = read_dims::<_, 2>(&mut r)?;
                let n = in_dim as usize * out_dim as usize;
                LayerParams::Pepi {
                    in_dim,
                    out_dim,
                    s: read_floats(&mut r, n)?,
                    o: read_floats(&mut r, n)?,
                    bias: read_floats(&mut r, out_dim as usize)?,
                }
            }
            other => return Err(Error::Format(format!("layer {i}: unknown kind tag {other}"))),
        };
        layers.push(layer);
    }
    if (r.position() as usize) != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.position() as usize)));
    }
    Ok(GlobalParams { layers })
}

pub fn save_checkpoint(params: &GlobalParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GlobalParams> {
    from_bytes(&std::fs::read(path)?)
}
