//! `RFNN` model checkpoints.
//!
//! Layout (little-endian): 16-byte header (`RFNN`, u16 version, zero
//! padding); init seed u64; input channels, height, width as u64; layer
//! count u64 followed by one descriptor per layer (u64 tag, u64 parameter
//! count, parameters as u64); tensor count u64 followed by each tensor (u64
//! rank, u64 dims, f64 values); CRC-32 of everything before it as u32.

use std::path::Path;

use crate::error::{Error, Result};

use super::model::Model;
use super::spec::{LayerSpec, ModelSpec, Shape3};
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RFNN";
const VERSION: u16 = 1;

fn put(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn descriptor(layer: &LayerSpec) -> (u64, Vec<u64>) {
    match *layer {
        LayerSpec::Conv {
            filters,
            kernel_h,
            kernel_w,
            stride,
        } => (1, vec![filters as u64, kernel_h as u64, kernel_w as u64, stride as u64]),
        LayerSpec::MaxPool { pool_h, pool_w } => (2, vec![pool_h as u64, pool_w as u64]),
        LayerSpec::Relu => (3, vec![]),
        LayerSpec::Flatten => (4, vec![]),
        LayerSpec::Dense { units } => (5, vec![units as u64]),
        LayerSpec::SoftmaxOutput { classes } => (6, vec![classes as u64]),
    }
}

fn from_descriptor(tag: u64, p: &[u64]) -> Result<LayerSpec> {
    let u = |i: usize| p[i] as usize;
    let want = |n: usize| {
        if p.len() == n {
            Ok(())
        } else {
            Err(Error::Format(format!("layer tag {tag} takes {n} parameters, found {}", p.len())))
        }
    };
    Ok(match tag {
        1 => {
            want(4)?;
            LayerSpec::Conv {
                filters: u(0),
                kernel_h: u(1),
                kernel_w: u(2),
                stride: u(3),
            }
        }
        2 => {
            want(2)?;
            LayerSpec::MaxPool { pool_h: u(0), pool_w: u(1) }
        }
        3 => {
            want(0)?;
            LayerSpec::Relu
        }
        4 => {
            want(0)?;
            LayerSpec::Flatten
        }
        5 => {
            want(1)?;
            LayerSpec::Dense { units: u(0) }
        }
        6 => {
            want(1)?;
            LayerSpec::SoftmaxOutput { classes: u(0) }
        }
        other => return Err(Error::Format(format!("unknown layer tag {other}"))),
    })
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&[0u8; 10]);
    put(&mut buf, model.seed());
    let spec = model.spec();
    for d in [spec.input.channels, spec.input.height, spec.input.width] {
        put(&mut buf, d as u64);
    }
    put(&mut buf, spec.layers.len() as u64);
    for layer in &spec.layers {
        let (tag, params) = descriptor(layer);
        put(&mut buf, tag);
        put(&mut buf, params.len() as u64);
        for p in params {
            put(&mut buf, p);
        }
    }
    put(&mut buf, model.params().len() as u64);
    for t in model.params() {
        put(&mut buf, t.shape().len() as u64);
        for &d in t.shape() {
            put(&mut buf, d as u64);
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn word(&mut self) -> Result<u64> {
        let end = self.pos + 8;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated RFNN checkpoint".into()))?;
        self.pos = end;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn count(&mut self, limit: usize) -> Result<usize> {
        let n = self.word()? as usize;
        if n > limit {
            return Err(Error::Format(format!("implausible count {n} in checkpoint")));
        }
        Ok(n)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing RFNN magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported RFNN version {version}")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Format("RFNN checksum mismatch".into()));
    }
    let limit = body.len() / 8;
    let mut cur = Cursor { bytes: body, pos: 16 };
    let seed = cur.word()?;
    let input = Shape3::new(cur.word()? as usize, cur.word()? as usize, cur.word()? as usize);
    let n_layers = cur.count(limit)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let tag = cur.word()?;
        let n = cur.count(limit)?;
        let params = (0..n).map(|_| cur.word()).collect::<Result<Vec<u64>>>()?;
        layers.push(from_descriptor(tag, &params)?);
    }
    let n_tensors = cur.count(limit)?;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let rank = cur.count(limit)?;
        let shape = (0..rank).map(|_| cur.count(limit)).collect::<Result<Vec<usize>>>()?;
        let len: usize = shape.iter().product();
        if len > limit {
            return Err(Error::Format("tensor larger than checkpoint".into()));
        }
        let data = (0..len)
            .map(|_| cur.word().map(f64::from_bits))
            .collect::<Result<Vec<f64>>>()?;
        tensors.push(Tensor::new(shape, data)?);
    }
    if cur.pos != body.len() {
        return Err(Error::Format("trailing bytes in RFNN checkpoint".into()));
    }
    Model::from_parts(ModelSpec { input, layers }, tensors, seed)
}

/// CRC-32 stored in the trailer of an encoded checkpoint.
pub fn checksum(encoded: &[u8]) -> Option<u32> {
    let tail = encoded.get(encoded.len().checked_sub(4)?..)?;
    Some(u32::from_le_bytes(tail.try_into().ok()?))
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::init(ModelSpec::three_stage(Shape3::new(3, 24, 30), [2, 3, 4], 5, 4), 9).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = model();
        let bytes = encode(&m);
        assert_eq!(&bytes[..4], b"RFNN");
        assert_eq!(decode(&bytes).unwrap(), m);
        assert_eq!(checksum(&bytes), Some(crc32fast::hash(&bytes[..bytes.len() - 4])));
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = encode(&model());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode(&bytes[..10]), Err(Error::Format(_))));
    }
}
