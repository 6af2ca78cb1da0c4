//! IDX ingestion and synthetic image classification data.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{Batch, Shape};
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Batch,
    pub test: Batch,
    pub shape: Shape,
    pub classes: usize,
}

fn be_u32(data: &[u8], at: usize) -> Result<u32> {
    data.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(Error::Truncated { expected: at + 4, found: data.len() })
}

fn magic(data: &[u8], expected: u32) -> Result<()> {
    let mut word = [0u8; 4];
    let n = data.len().min(4);
    word[..n].copy_from_slice(&data[..n]);
    let found = u32::from_be_bytes(word);
    if data.len() < 4 || found != expected {
        return Err(Error::BadMagic { found, expected });
    }
    Ok(())
}

/// Unsigned-byte image tensor: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(data: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    magic(data, IDX_IMAGES_MAGIC)?;
    let count = be_u32(data, 4)? as usize;
    let rows = be_u32(data, 8)? as usize;
    let cols = be_u32(data, 12)? as usize;
    let len = count * rows * cols;
    let body = data.get(16..16 + len).ok_or(Error::Truncated { expected: 16 + len, found: data.len() })?;
    Ok((count, rows, cols, body.to_vec()))
}

pub fn parse_idx_labels(data: &[u8]) -> Result<Vec<u8>> {
    magic(data, IDX_LABELS_MAGIC)?;
    let count = be_u32(data, 4)? as usize;
    let body = data.get(8..8 + count).ok_or(Error::Truncated { expected: 8 + count, found: data.len() })?;
    Ok(body.to_vec())
}

/// Pixels scaled to `[0, 1]`, one image per row, with labels.
/// Call [`center`] afterwards to subtract the mean.
pub fn load_idx(images: &Path, labels: &Path) -> Result<(Batch, Shape)> {
    let (count, rows, cols, pixels) = parse_idx_images(&fs::read(images)?)?;
    let labels = parse_idx_labels(&fs::read(labels)?)?;
    if labels.len() != count {
        return Err(Error::DimensionMismatch(format!("{count} images but {} labels", labels.len())));
    }
    let inputs = Array2::from_shape_vec((count, rows * cols), pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("payload length checked");
    let batch = Batch::new(inputs, labels.into_iter().map(usize::from).collect())?;
    Ok((batch, Shape::image(1, rows, cols)))
}

/// Subtracts the mean pixel of `reference` from every batch; returns it.
pub fn center(reference: &Batch, others: &mut [&mut Batch]) -> f64 {
    let mean = reference.inputs.mean().unwrap_or(0.0);
    for b in others {
        b.inputs.mapv_inplace(|v| v - mean);
    }
    mean
}

fn truncate(b: Batch, n: usize) -> Result<Batch> {
    let n = n.min(b.len());
    Batch::new(b.inputs.slice(ndarray::s![..n, ..]).to_owned(), b.labels[..n].to_vec())
}

/// Standard MNIST file names under `dir`, truncated to the requested sizes
/// and centered by the training mean.
pub fn load_mnist_dir(dir: &Path, train: usize, test: usize) -> Result<Dataset> {
    let (tr, shape) = load_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?;
    let (te, _) = load_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
    let (mut tr, mut te) = (truncate(tr, train)?, truncate(te, test)?);
    let reference = tr.clone();
    center(&reference, &mut [&mut tr, &mut te]);
    let classes = tr.labels.iter().chain(&te.labels).max().map_or(0, |m| m + 1);
    Ok(Dataset { train: tr, test: te, shape, classes })
}

/// Recipe for a synthetic image classification set.
///
/// Each class owns `modes` prototype images built from a few Gaussian blobs
/// per channel. A sample is a prototype shifted by up to `max_shift` pixels,
/// scaled in intensity, with pixel noise, clipped to `[0, 1]` and centered.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub shape: Shape,
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    pub modes: usize,
    pub blobs: usize,
    pub noise: f64,
    pub max_shift: usize,
}

impl SynthSpec {
    /// 28×28 grey images, 10 classes.
    pub fn mnist_like(train: usize, test: usize) -> Self {
        Self { shape: Shape::image(1, 28, 28), classes: 10, train, test, modes: 4, blobs: 3, noise: 0.35, max_shift: 3 }
    }

    /// Colour images of side `side`, 10 classes.
    pub fn cifar_like(side: usize, train: usize, test: usize) -> Self {
        Self { shape: Shape::image(3, side, side), classes: 10, train, test, modes: 4, blobs: 3, noise: 0.35, max_shift: 2 }
    }
}

fn prototype<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Vec<f64> {
    let s = spec.shape;
    let mut img = vec![0.0; s.len()];
    for c in 0..s.channels {
        for _ in 0..spec.blobs {
            let cy = rng.random_range(0.15..0.85) * s.height as f64;
            let cx = rng.random_range(0.15..0.85) * s.width as f64;
            let sigma = rng.random_range(0.06..0.16) * s.height.max(s.width) as f64;
            let amp = rng.random_range(0.5..1.0);
            for y in 0..s.height {
                for x in 0..s.width {
                    let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    img[c * s.spatial() + y * s.width + x] += amp * (-r2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
    }
    img
}

fn render<R: Rng + ?Sized>(spec: &SynthSpec, proto: &[f64], rng: &mut R, noise: &Normal<f64>, out: &mut [f64]) {
    let s = spec.shape;
    let m = spec.max_shift as i64;
    let (dy, dx) = (rng.random_range(-m..=m) as isize, rng.random_range(-m..=m) as isize);
    let gain = rng.random_range(0.7..1.3);
    for c in 0..s.channels {
        for y in 0..s.height as isize {
            for x in 0..s.width as isize {
                let (sy, sx) = (y - dy, x - dx);
                let base = if sy >= 0 && sx >= 0 && (sy as usize) < s.height && (sx as usize) < s.width {
                    proto[c * s.spatial() + sy as usize * s.width + sx as usize]
                } else {
                    0.0
                };
                let v = gain * base + noise.sample(rng);
                out[c * s.spatial() + y as usize * s.width + x as usize] = v.clamp(0.0, 1.0);
            }
        }
    }
}

/// Deterministic given `seed`; train and test are disjoint draws with
/// balanced, shuffled labels, centered by the training mean.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    if spec.classes < 2 || spec.modes == 0 || spec.shape.is_empty() || spec.train == 0 || spec.test == 0 {
        return Err(Error::InvalidParameter(format!("degenerate synthetic spec {spec:?}")));
    }
    let mut r = rng::stream(seed, 0);
    let protos: Vec<Vec<Vec<f64>>> =
        (0..spec.classes).map(|_| (0..spec.modes).map(|_| prototype(spec, &mut r)).collect()).collect();
    let noise = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let split = |n: usize, stream: u64| -> Result<Batch> {
        let mut r = rng::stream(seed, stream);
        let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
        labels.shuffle(&mut r);
        let mut inputs = Array2::zeros((n, spec.shape.len()));
        for (mut row, &y) in inputs.outer_iter_mut().zip(&labels) {
            let proto = &protos[y][r.random_range(0..spec.modes)];
            render(spec, proto, &mut r, &noise, row.as_slice_mut().expect("standard layout"));
        }
        Batch::new(inputs, labels)
    };
    let mut train = split(spec.train, 1)?;
    let mut test = split(spec.test, 2)?;
    let reference = train.clone();
    center(&reference, &mut [&mut train, &mut test]);
    Ok(Dataset { train, test, shape: spec.shape, classes: spec.classes })
}
