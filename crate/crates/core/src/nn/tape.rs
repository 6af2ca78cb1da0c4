//! Backward-pass records.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::memory::ByteCount;
use crate::rng;

/// Bits per index when indices are stored explicitly.
pub const INDEX_BITS: u64 = 32;

/// Precision of stored activation values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Values {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Values {
    fn from_iter<I: IntoIterator<Item = f64>>(precision: Precision, it: I) -> Self {
        match precision {
            Precision::Single => Values::F32(it.into_iter().map(|x| x as f32).collect()),
            Precision::Double => Values::F64(it.into_iter().collect()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Values::F32(v) => v.len(),
            Values::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> f64 {
        match self {
            Values::F32(v) => v[i] as f64,
            Values::F64(v) => v[i],
        }
    }

    fn bits(&self) -> u64 {
        match self {
            Values::F32(v) => 32 * v.len() as u64,
            Values::F64(v) => 64 * v.len() as u64,
        }
    }
}

/// Where the sampled indices of a record come from.
#[derive(Clone, Debug, PartialEq)]
pub enum IndexSource {
    /// Regenerated from one seed; every row uses the same indices.
    Shared(u64),
    /// Regenerated from one seed; row `r` uses stream `r`.
    PerRow(u64),
    /// Stored indices, one list per row or a single list for all rows.
    Explicit(Vec<Vec<u32>>),
}

impl IndexSource {
    pub fn indices(&self, row: usize, d: usize, k: usize) -> Vec<usize> {
        match self {
            IndexSource::Shared(seed) => draw_indices(*seed, 0, d, k),
            IndexSource::PerRow(seed) => draw_indices(*seed, row as u64, d, k),
            IndexSource::Explicit(lists) => {
                let list = if lists.len() == 1 { &lists[0] } else { &lists[row] };
                list.iter().map(|&i| i as usize).collect()
            }
        }
    }

    fn bits(&self) -> u64 {
        match self {
            IndexSource::Explicit(lists) => INDEX_BITS * lists.iter().map(|l| l.len() as u64).sum::<u64>(),
            _ => 0,
        }
    }

    fn validate(&self, rows: usize, d: usize, k: usize) -> Result<()> {
        if let IndexSource::Explicit(lists) = self {
            if lists.len() != 1 && lists.len() != rows {
                return Err(Error::TapeMismatch(format!("{} index lists for {rows} rows", lists.len())));
            }
            for l in lists {
                if l.len() != k || l.iter().any(|&i| i as usize >= d) {
                    return Err(Error::TapeMismatch(format!("index list {l:?} invalid for d={d}, k={k}")));
                }
            }
        }
        Ok(())
    }
}

fn draw_indices(seed: u64, stream: u64, d: usize, k: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, stream);
    (0..k).map(|_| r.random_range(0..d)).collect()
}

/// Where the `d × k` sign matrix of a projected record comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SignSource {
    Shared(u64),
    PerRow(u64),
    /// Stored ±1 matrices, one per row or a single one for all rows.
    Explicit(Vec<Array2<f64>>),
}

impl SignSource {
    fn stream(&self, row: usize) -> Signs<'_> {
        match self {
            SignSource::Shared(seed) => Signs::Seeded(SignStream::new(*seed, 0)),
            SignSource::PerRow(seed) => Signs::Seeded(SignStream::new(*seed, row as u64)),
            SignSource::Explicit(m) => Signs::Stored(if m.len() == 1 { m[0].iter() } else { m[row].iter() }),
        }
    }

    /// Dense `d × k` sign matrix for `row`. Oracle use.
    pub fn signs(&self, row: usize, d: usize, k: usize) -> Array2<f64> {
        let mut s = self.stream(row);
        Array2::from_shape_simple_fn((d, k), || s.next())
    }

    fn bits(&self) -> u64 {
        match self {
            SignSource::Explicit(m) => m.iter().map(|a| a.len() as u64).sum(),
            _ => 0,
        }
    }

    fn validate(&self, rows: usize, d: usize, k: usize) -> Result<()> {
        if let SignSource::Explicit(m) = self {
            if m.len() != 1 && m.len() != rows {
                return Err(Error::TapeMismatch(format!("{} sign matrices for {rows} rows", m.len())));
            }
            if m.iter().any(|a| a.dim() != (d, k) || a.iter().any(|&v| v != 1.0 && v != -1.0)) {
                return Err(Error::TapeMismatch(format!("sign matrices must be {d}×{k} with ±1 entries")));
            }
        }
        Ok(())
    }
}

enum Signs<'a> {
    Seeded(SignStream),
    Stored(ndarray::iter::Iter<'a, f64, ndarray::Ix2>),
}

impl Signs<'_> {
    fn next(&mut self) -> f64 {
        match self {
            Signs::Seeded(s) => s.next(),
            Signs::Stored(it) => *it.next().expect("validated sign matrix"),
        }
    }
}

/// ±1 signs in row-major `(i, j)` order, 64 per generator word.
struct SignStream {
    rng: rng::StreamRng,
    word: u64,
    left: u32,
}

impl SignStream {
    fn new(seed: u64, stream: u64) -> Self {
        Self { rng: rng::stream(seed, stream), word: 0, left: 0 }
    }

    fn next(&mut self) -> f64 {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let bit = self.word & 1;
        self.word >>= 1;
        self.left -= 1;
        if bit == 1 { 1.0 } else { -1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Empty,
    Dense { rows: usize, cols: usize, values: Values },
    /// `k` entries per row drawn with replacement; reconstruction scales by `d/k`.
    Sampled { rows: usize, d: usize, k: usize, source: IndexSource, values: Values },
    /// `k` values per row equal to `Rᵀx` with `R = signs / √k`.
    Projected { rows: usize, d: usize, k: usize, source: SignSource, values: Values },
    /// One bit per entry, row-major.
    ReluMask { rows: usize, cols: usize, bits: Vec<u64> },
    /// Derivative recovered from the next dense record.
    ReluFromSuccessor,
}

impl Storage {
    pub fn dense(x: ArrayView2<f64>, precision: Precision) -> Self {
        Storage::Dense { rows: x.nrows(), cols: x.ncols(), values: Values::from_iter(precision, x.iter().copied()) }
    }

    pub fn sampled(x: ArrayView2<f64>, k: usize, source: IndexSource, precision: Precision) -> Result<Self> {
        let (rows, d) = x.dim();
        source.validate(rows, d, k)?;
        let mut vals = Vec::with_capacity(rows * k);
        let shared = match &source {
            IndexSource::Shared(_) => Some(source.indices(0, d, k)),
            IndexSource::Explicit(l) if l.len() == 1 => Some(source.indices(0, d, k)),
            _ => None,
        };
        for r in 0..rows {
            let idx = match &shared {
                Some(s) => s.clone(),
                None => source.indices(r, d, k),
            };
            vals.extend(idx.iter().map(|&i| x[[r, i]]));
        }
        Ok(Storage::Sampled { rows, d, k, source, values: Values::from_iter(precision, vals) })
    }

    pub fn projected(x: ArrayView2<f64>, k: usize, source: SignSource, precision: Precision) -> Result<Self> {
        let (rows, d) = x.dim();
        source.validate(rows, d, k)?;
        let scale = 1.0 / (k as f64).sqrt();
        let mut vals = Vec::with_capacity(rows * k);
        let mut acc = vec![0.0; k];
        for r in 0..rows {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut s = source.stream(r);
            for i in 0..d {
                let xi = x[[r, i]];
                for a in acc.iter_mut() {
                    *a += s.next() * xi;
                }
            }
            vals.extend(acc.iter().map(|a| a * scale));
        }
        Ok(Storage::Projected { rows, d, k, source, values: Values::from_iter(precision, vals) })
    }

    /// Mask of `x > 0`.
    pub fn relu_mask(x: ArrayView2<f64>) -> Self {
        let (rows, cols) = x.dim();
        let mut bits = vec![0u64; (rows * cols).div_ceil(64)];
        for (n, &v) in x.iter().enumerate() {
            if v > 0.0 {
                bits[n / 64] |= 1 << (n % 64);
            }
        }
        Storage::ReluMask { rows, cols, bits }
    }

    /// Exact payload size. Regenerable seeds are not counted.
    pub fn bit_size(&self) -> u64 {
        match self {
            Storage::Empty | Storage::ReluFromSuccessor => 0,
            Storage::Dense { values, .. } => values.bits(),
            Storage::Sampled { source, values, .. } => values.bits() + source.bits(),
            Storage::Projected { source, values, .. } => values.bits() + source.bits(),
            Storage::ReluMask { rows, cols, .. } => (rows * cols) as u64,
        }
    }

    pub fn byte_size(&self) -> ByteCount {
        ByteCount::from_bits(self.bit_size())
    }

    /// Unbiased `rows × d` surrogate of the recorded activations.
    pub fn reconstruct(&self) -> Result<Array2<f64>> {
        match self {
            Storage::Dense { rows, cols, values } => Ok(Array2::from_shape_fn((*rows, *cols), |(r, c)| values.get(r * cols + c))),
            Storage::Sampled { rows, d, k, source, values } => {
                let scale = *d as f64 / *k as f64;
                let mut out = Array2::zeros((*rows, *d));
                for r in 0..*rows {
                    for (s, &i) in source.indices(r, *d, *k).iter().enumerate() {
                        out[[r, i]] += scale * values.get(r * k + s);
                    }
                }
                Ok(out)
            }
            Storage::Projected { rows, d, k, source, values } => {
                let scale = 1.0 / (*k as f64).sqrt();
                let mut out = Array2::zeros((*rows, *d));
                for r in 0..*rows {
                    let v: Vec<f64> = (0..*k).map(|j| values.get(r * k + j) * scale).collect();
                    let mut s = source.stream(r);
                    for i in 0..*d {
                        out[[r, i]] = v.iter().map(|&vj| s.next() * vj).sum();
                    }
                }
                Ok(out)
            }
            other => Err(Error::TapeMismatch(format!("record {} holds no activations", other.kind()))),
        }
    }

    /// ReLU derivative mask as 0/1 values.
    pub fn mask(&self) -> Result<Array2<f64>> {
        match self {
            Storage::ReluMask { rows, cols, bits } => Ok(Array2::from_shape_fn((*rows, *cols), |(r, c)| {
                let n = r * cols + c;
                ((bits[n / 64] >> (n % 64)) & 1) as f64
            })),
            Storage::Dense { rows, cols, values } => {
                Ok(Array2::from_shape_fn((*rows, *cols), |(r, c)| (values.get(r * cols + c) > 0.0) as u8 as f64))
            }
            other => Err(Error::TapeMismatch(format!("record {} holds no ReLU derivative", other.kind()))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Storage::Empty => "empty",
            Storage::Dense { .. } => "dense",
            Storage::Sampled { .. } => "sampled",
            Storage::Projected { .. } => "projected",
            Storage::ReluMask { .. } => "relu-mask",
            Storage::ReluFromSuccessor => "relu-from-successor",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TapeRecord {
    pub layer: usize,
    /// Timestep for recurrent records.
    pub step: Option<usize>,
    pub storage: Storage,
}

impl TapeRecord {
    pub fn bit_size(&self) -> u64 {
        self.storage.bit_size()
    }

    pub fn byte_size(&self) -> ByteCount {
        self.storage.byte_size()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tape {
    pub(crate) records: Vec<TapeRecord>,
    pub(crate) labels: Vec<usize>,
}

impl Tape {
    pub fn records(&self) -> &[TapeRecord] {
        &self.records
    }

    pub fn batch(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn byte_size(&self) -> ByteCount {
        self.records.iter().map(TapeRecord::byte_size).sum()
    }

    pub(crate) fn record(&self, i: usize) -> Result<&TapeRecord> {
        self.records.get(i).ok_or_else(|| Error::TapeMismatch(format!("missing record {i}")))
    }
}

/// Supplies the randomness of stored records.
pub trait TapeSampler {
    fn indices(&mut self, rows: usize, d: usize, k: usize, per_row: bool) -> IndexSource;
    fn signs(&mut self, rows: usize, d: usize, k: usize, per_row: bool) -> SignSource;
}

/// Draws one seed per record from `R`.
pub struct RngSampler<R>(pub R);

impl<R: Rng> TapeSampler for RngSampler<R> {
    fn indices(&mut self, _rows: usize, _d: usize, _k: usize, per_row: bool) -> IndexSource {
        let seed = self.0.random();
        if per_row { IndexSource::PerRow(seed) } else { IndexSource::Shared(seed) }
    }

    fn signs(&mut self, _rows: usize, _d: usize, _k: usize, per_row: bool) -> SignSource {
        let seed = self.0.random();
        if per_row { SignSource::PerRow(seed) } else { SignSource::Shared(seed) }
    }
}

/// Replays prepared index sources in order; sign requests use fixed seeds.
#[derive(Clone, Debug, Default)]
pub struct ScriptedSampler {
    pub indices: VecDeque<IndexSource>,
    pub signs: VecDeque<SignSource>,
}

impl TapeSampler for ScriptedSampler {
    fn indices(&mut self, _rows: usize, _d: usize, _k: usize, _per_row: bool) -> IndexSource {
        self.indices.pop_front().unwrap_or(IndexSource::Shared(0))
    }

    fn signs(&mut self, _rows: usize, _d: usize, _k: usize, _per_row: bool) -> SignSource {
        self.signs.pop_front().unwrap_or(SignSource::Shared(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sampled_reconstruction() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let s = Storage::sampled(
            x.view(),
            2,
            IndexSource::Explicit(vec![vec![0, 0], vec![2, 1]]),
            Precision::Double,
        )
        .unwrap();
        let r = s.reconstruct().unwrap();
        assert_eq!(r, array![[3.0, 0.0, 0.0], [0.0, 7.5, 9.0]]);
        assert_eq!(s.bit_size(), 4 * 64 + 4 * 32);
    }

    #[test]
    fn regenerated_indices_match_stored_values() {
        let x = Array2::from_shape_fn((4, 10), |(r, c)| (r * 10 + c) as f64);
        for source in [IndexSource::Shared(7), IndexSource::PerRow(7)] {
            let s = Storage::sampled(x.view(), 3, source.clone(), Precision::Single).unwrap();
            assert_eq!(s.bit_size(), 4 * 3 * 32);
            let Storage::Sampled { values, .. } = &s else { unreachable!() };
            for r in 0..4 {
                for (j, i) in source.indices(r, 10, 3).into_iter().enumerate() {
                    assert_eq!(values.get(r * 3 + j), x[[r, i]]);
                }
            }
        }
    }

    #[test]
    fn projection_matches_dense_signs() {
        let x = array![[1.0, -2.0, 0.5, 3.0]];
        let src = SignSource::PerRow(11);
        let s = Storage::projected(x.view(), 2, src.clone(), Precision::Double).unwrap();
        let signs = src.signs(0, 4, 2);
        let p = signs.dot(&signs.t()) / 2.0;
        let expect = x.dot(&p);
        let got = s.reconstruct().unwrap();
        for (a, b) in got.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_signs() {
        let x = array![[1.0, -2.0, 0.5], [0.0, 1.0, 2.0]];
        let m = array![[1.0], [-1.0], [1.0]];
        let s = Storage::projected(x.view(), 1, SignSource::Explicit(vec![m.clone()]), Precision::Double).unwrap();
        assert_eq!(s.bit_size(), 2 * 64 + 3);
        assert_eq!(s.reconstruct().unwrap(), x.dot(&m).dot(&m.t()));
        let bad = SignSource::Explicit(vec![array![[2.0], [1.0], [1.0]]]);
        assert!(Storage::projected(x.view(), 1, bad, Precision::Double).is_err());
    }

    #[test]
    fn relu_mask_one_bit_per_entry() {
        let x = Array2::from_shape_fn((3, 50), |(r, c)| (r as f64 - 1.0) * (c as f64 - 20.0));
        let m = Storage::relu_mask(x.view());
        assert_eq!(m.bit_size(), 150);
        let back = m.mask().unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert_eq!(*a, if *b > 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn bad_explicit_indices() {
        let x = Array2::<f64>::zeros((2, 3));
        let src = IndexSource::Explicit(vec![vec![3]]);
        assert!(Storage::sampled(x.view(), 1, src, Precision::Single).is_err());
    }
}
