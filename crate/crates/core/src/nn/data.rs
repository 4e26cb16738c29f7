use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::error::{NnError, Result};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Labelled examples; `inputs` is `N x feature shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(NnError::CountMismatch { images: inputs.rows(), labels: labels.len() });
        }
        if num_classes < 2 {
            return Err(NnError::InvalidNetwork("a dataset needs at least two classes".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(NnError::Dimension(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(Self { inputs, labels, num_classes, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn subset(&self, indices: &[usize], split: Split) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split,
        }
    }

    /// First `n` items (or all of them if fewer).
    pub fn head(&self, n: usize, split: Split) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx, split)
    }

    /// Splits off the last `n` items: `(front, back)`.
    pub fn split_tail(&self, n: usize, front: Split, back: Split) -> (Dataset, Dataset) {
        let cut = self.len().saturating_sub(n);
        let a: Vec<usize> = (0..cut).collect();
        let b: Vec<usize> = (cut..self.len()).collect();
        (self.subset(&a, front), self.subset(&b, back))
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Two isotropic 2-D Gaussians (σ = 1) whose centres are 5σ apart.
    Blobs,
    /// Two interleaved half circles with Gaussian noise 0.1.
    Moons,
    /// Ten stroke-pattern classes rendered as 1x12x12 images with jitter and noise.
    Glyphs,
}

pub const GLYPH_SIDE: usize = 12;
const GLYPH_CLASSES: usize = 10;
/// Standard deviation of the additive pixel noise.
const GLYPH_NOISE: f64 = 0.2;
const GLYPH_PROTOTYPE_SEED: u64 = 0x0067_6c79_7068;

/// Deterministic synthetic dataset with balanced classes (`label = i mod C`).
pub fn synth_dataset(kind: SynthKind, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(NnError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    match kind {
        SynthKind::Blobs => {
            let mut data = Vec::with_capacity(2 * n);
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            for &y in &labels {
                let cx = if y == 0 { -2.5 } else { 2.5 };
                data.push(cx + unit.sample(&mut rng));
                data.push(unit.sample(&mut rng));
            }
            Dataset::new(Tensor::new(vec![n, 2], data)?, labels, 2, Split::Train)
        }
        SynthKind::Moons => {
            let mut data = Vec::with_capacity(2 * n);
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            for &y in &labels {
                let t = rng.random_range(0.0..std::f64::consts::PI);
                let (x, z) = if y == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
                data.push(x + 0.1 * unit.sample(&mut rng));
                data.push(z + 0.1 * unit.sample(&mut rng));
            }
            Dataset::new(Tensor::new(vec![n, 2], data)?, labels, 2, Split::Train)
        }
        SynthKind::Glyphs => {
            let protos = glyph_strokes();
            let side = GLYPH_SIDE;
            let mut data = Vec::with_capacity(n * side * side);
            let mut labels: Vec<usize> = (0..n).map(|i| i % GLYPH_CLASSES).collect();
            labels.shuffle(&mut rng);
            for &y in &labels {
                let dx = rng.random_range(-1i64..=1) as f64;
                let dy = rng.random_range(-1i64..=1) as f64;
                let gain = rng.random_range(0.7..1.0);
                let strokes: Vec<[f64; 4]> =
                    protos[y].iter().map(|s| [s[0] + dy, s[1] + dx, s[2] + dy, s[3] + dx]).collect();
                let img = render_strokes(&strokes);
                for base in img {
                    let v = gain * base + GLYPH_NOISE * unit.sample(&mut rng);
                    data.push(v.clamp(0.0, 1.0));
                }
            }
            Dataset::new(Tensor::new(vec![n, 1, side, side], data)?, labels, GLYPH_CLASSES, Split::Train)
        }
    }
}

/// Stroke endpoints `[r0, c0, r1, c1]` of each class prototype; fixed
/// regardless of the dataset seed.
fn glyph_strokes() -> Vec<Vec<[f64; 4]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(GLYPH_PROTOTYPE_SEED);
    let side = GLYPH_SIDE as f64;
    (0..GLYPH_CLASSES)
        .map(|_| {
            (0..3)
                .map(|_| {
                    [
                        rng.random_range(1.5..side - 2.5),
                        rng.random_range(1.5..side - 2.5),
                        rng.random_range(1.5..side - 2.5),
                        rng.random_range(1.5..side - 2.5),
                    ]
                })
                .collect()
        })
        .collect()
}

fn render_strokes(strokes: &[[f64; 4]]) -> Vec<f64> {
    let mut img = vec![0.0; GLYPH_SIDE * GLYPH_SIDE];
    for r in 0..GLYPH_SIDE {
        for c in 0..GLYPH_SIDE {
            let p = (r as f64, c as f64);
            let d = strokes
                .iter()
                .map(|s| segment_distance(p, (s[0], s[1]), (s[2], s[3])))
                .fold(f64::INFINITY, f64::min);
            img[r * GLYPH_SIDE + c] = (1.0 - d / 1.2).clamp(0.0, 1.0);
        }
    }
    img
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * vx, a.1 + t * vy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}
