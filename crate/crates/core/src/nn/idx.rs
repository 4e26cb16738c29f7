//! IDX ubyte reader/writer (the MNIST distribution format).

use std::fs;
use std::path::Path;

use super::data::{Dataset, Split};
use super::error::{NnError, Result};
use super::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| NnError::Truncated(format!("{what}: header ends at byte {}", bytes.len())))
}

/// Returns the dimension list and the payload slice.
fn parse<'a>(bytes: &'a [u8], magic: u32, what: &str) -> Result<(Vec<usize>, &'a [u8])> {
    let found = read_u32(bytes, 0, what)?;
    if found != magic {
        return Err(NnError::BadMagic { found, expected: magic });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|i| read_u32(bytes, 4 + 4 * i, what).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndims;
    let need: usize = dims.iter().product();
    let payload = &bytes[start.min(bytes.len())..];
    if payload.len() < need {
        return Err(NnError::Truncated(format!(
            "{what}: expected {need} data bytes, found {}",
            payload.len()
        )));
    }
    Ok((dims, &payload[..need]))
}

/// Images as `N x 1 x rows x cols`, pixels scaled to `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = fs::read(path.as_ref())?;
    let (dims, payload) = parse(&bytes, IMAGES_MAGIC, &path.as_ref().display().to_string())?;
    let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![dims[0], 1, dims[1], dims[2]], data)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let bytes = fs::read(path.as_ref())?;
    let (_, payload) = parse(&bytes, LABELS_MAGIC, &path.as_ref().display().to_string())?;
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Loads a paired image/label file set. The class count is `max label + 1`
/// (at least 2).
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let x = load_idx_images(images)?;
    let y = load_idx_labels(labels)?;
    if x.rows() != y.len() {
        return Err(NnError::CountMismatch { images: x.rows(), labels: y.len() });
    }
    let classes = y.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(x, y, classes, split)
}

/// Writes `N x rows x cols` (or `N x 1 x rows x cols`) pixels in `[0, 1]`.
pub fn write_idx_images(path: impl AsRef<Path>, images: &Tensor) -> Result<()> {
    let s = images.shape();
    let (rows, cols) = match s.len() {
        3 => (s[1], s[2]),
        4 if s[1] == 1 => (s[2], s[3]),
        _ => return Err(NnError::Dimension(format!("cannot write {s:?} as IDX images"))),
    };
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGES_MAGIC, s[0] as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &y in labels {
        let b = u8::try_from(y).map_err(|_| NnError::Dimension(format!("label {y} does not fit a byte")))?;
        out.push(b);
    }
    fs::write(path, out)?;
    Ok(())
}
