//! Versioned flat binary weight checkpoints.
//!
//! Layout (little-endian): `b"QFWT"`, `u32` version, `u32` layer count, then
//! for every layer the weight tensor followed by the bias tensor, each as
//! `u32` rank, `rank x u32` dims and `f64` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::error::{NnError, Result};
use super::network::{LayerWeights, NetworkWeights};
use super::tensor::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"QFWT";
pub const WEIGHTS_VERSION: u32 = 1;

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_weights<W: Write>(mut w: W, weights: &NetworkWeights) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(weights.layers.len() as u32).to_le_bytes());
    for l in &weights.layers {
        put_tensor(&mut out, &l.weight);
        put_tensor(&mut out, &l.bias);
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NnError::BadCheckpoint(format!("truncated at byte {} (wanted {n} more)", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(NnError::BadCheckpoint(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
            NnError::BadCheckpoint(format!("shape {shape:?} overflows"))
        })?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| NnError::BadCheckpoint("size overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape, data).map_err(|e| NnError::BadCheckpoint(e.to_string()))
    }
}

pub fn read_weights<R: Read>(mut r: R) -> Result<NetworkWeights> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    if c.take(4)? != WEIGHTS_MAGIC {
        return Err(NnError::BadCheckpoint("missing QFWT magic".into()));
    }
    let version = c.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(NnError::CheckpointVersion(version));
    }
    let count = c.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let weight = c.tensor()?;
        let bias = c.tensor()?;
        layers.push(LayerWeights { weight, bias });
    }
    if c.at != bytes.len() {
        return Err(NnError::BadCheckpoint(format!("{} trailing bytes", bytes.len() - c.at)));
    }
    Ok(NetworkWeights { layers })
}

pub fn save_weights(path: impl AsRef<Path>, weights: &NetworkWeights) -> Result<()> {
    let mut buf = Vec::new();
    write_weights(&mut buf, weights)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights> {
    read_weights(fs::File::open(path)?)
}
