//! Random matrix injection.
//!
//! A random `d × d` matrix `P = R Rᵀ` with `E[P] = I` inserted to the right
//! of an intermediate Jacobian `J` leaves `E[J P] = J` unchanged, and since
//! `R` is `d × k`, only `J R` (or `k` columns of `J`) has to be kept. Two
//! constructions are provided:
//!
//! * basis sampling: `P = (d/k) Σ_s e_{i_s} e_{i_s}ᵀ` with `i_s` drawn
//!   uniformly with replacement;
//! * Rademacher projection: `R` has i.i.d. entries `±1/√k`.
//!
//! `P` is never formed by the sketching path; [`SamplingMatrix::to_dense`]
//! exists for oracles.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SamplingMatrix {
    Basis {
        d: usize,
        indices: Vec<usize>,
    },
    /// `signs` is `d × k` with entries ±1; `R = signs / √k`.
    Rademacher {
        signs: Array2<f64>,
    },
}

fn validate(d: usize, k: usize) -> Result<()> {
    if d == 0 || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "sampling matrix needs d >= 1 and k >= 1 (got d={d}, k={k})"
        )));
    }
    Ok(())
}

/// Reduced dimension `ceil(f·d)` for a sampling fraction `f ∈ (0, 1]`.
pub fn reduced_dim(fraction: f64, d: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("fraction {fraction} outside (0, 1]")));
    }
    // Guard against 0.1 * 300 = 30.000000000000004 rounding up to 31.
    let raw = fraction * d as f64;
    let k = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    Ok(k.clamp(1, d.max(1)))
}

impl SamplingMatrix {
    pub fn sample_basis<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Self> {
        validate(d, k)?;
        let indices = (0..k).map(|_| rng.random_range(0..d)).collect();
        Ok(SamplingMatrix::Basis { d, indices })
    }

    pub fn sample_rademacher<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Self> {
        validate(d, k)?;
        let signs = Array2::from_shape_simple_fn((d, k), || if rng.random::<bool>() { 1.0 } else { -1.0 });
        Ok(SamplingMatrix::Rademacher { signs })
    }

    /// Basis matrix with the given draws.
    pub fn basis_from_indices(d: usize, indices: Vec<usize>) -> Result<Self> {
        validate(d, indices.len())?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= d) {
            return Err(Error::InvalidParameter(format!("index {bad} out of range for d={d}")));
        }
        Ok(SamplingMatrix::Basis { d, indices })
    }

    /// Rademacher matrix with the given `d × k` sign pattern.
    pub fn rademacher_from_signs(signs: Array2<f64>) -> Result<Self> {
        validate(signs.nrows(), signs.ncols())?;
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidParameter("sign matrix entries must be ±1".into()));
        }
        Ok(SamplingMatrix::Rademacher { signs })
    }

    pub fn dim(&self) -> usize {
        match self {
            SamplingMatrix::Basis { d, .. } => *d,
            SamplingMatrix::Rademacher { signs } => signs.nrows(),
        }
    }

    pub fn reduced(&self) -> usize {
        match self {
            SamplingMatrix::Basis { indices, .. } => indices.len(),
            SamplingMatrix::Rademacher { signs } => signs.ncols(),
        }
    }

    /// The factor `R` (`d × k`) with `P = R Rᵀ`.
    pub fn factor(&self) -> Array2<f64> {
        match self {
            SamplingMatrix::Basis { d, indices } => {
                let k = indices.len();
                let s = (*d as f64 / k as f64).sqrt();
                let mut r = Array2::zeros((*d, k));
                for (col, &i) in indices.iter().enumerate() {
                    r[[i, col]] = s;
                }
                r
            }
            SamplingMatrix::Rademacher { signs } => signs / (signs.ncols() as f64).sqrt(),
        }
    }

    /// Dense `P`. Oracle use only.
    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            SamplingMatrix::Basis { d, indices } => {
                let scale = *d as f64 / indices.len() as f64;
                let mut p = Array2::zeros((*d, *d));
                for &i in indices {
                    p[[i, i]] += scale;
                }
                p
            }
            SamplingMatrix::Rademacher { signs } => signs.dot(&signs.t()) / signs.ncols() as f64,
        }
    }
}

/// Compact form of `J · P`.
#[derive(Clone, Debug, PartialEq)]
pub enum SketchedJacobian {
    /// The `k` drawn columns of `J` (duplicates kept), their indices, and
    /// the scale `d/k`.
    Columns {
        d: usize,
        indices: Vec<usize>,
        columns: Array2<f64>,
    },
    /// `J · signs` (`m × k`); `J R = product / √k`.
    Projected {
        product: Array2<f64>,
        signs: Array2<f64>,
    },
}

/// `S_P[J] = J · P` without assembling `P`.
pub fn apply_right(j: ArrayView2<f64>, p: &SamplingMatrix) -> Result<SketchedJacobian> {
    if j.ncols() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Jacobian has {} columns, sampling matrix has dimension {}",
            j.ncols(),
            p.dim()
        )));
    }
    Ok(match p {
        SamplingMatrix::Basis { d, indices } => SketchedJacobian::Columns {
            d: *d,
            indices: indices.clone(),
            columns: j.select(Axis(1), indices),
        },
        SamplingMatrix::Rademacher { signs } => SketchedJacobian::Projected {
            product: j.dot(signs),
            signs: signs.clone(),
        },
    })
}

impl SketchedJacobian {
    pub fn rows(&self) -> usize {
        match self {
            SketchedJacobian::Columns { columns, .. } => columns.nrows(),
            SketchedJacobian::Projected { product, .. } => product.nrows(),
        }
    }

    /// The unbiased `m × d` surrogate `J · P`.
    pub fn reconstruct(&self) -> Array2<f64> {
        match self {
            SketchedJacobian::Columns { d, indices, columns } => {
                let scale = *d as f64 / indices.len() as f64;
                let mut out = Array2::zeros((columns.nrows(), *d));
                for (col, &i) in indices.iter().enumerate() {
                    out.column_mut(i).scaled_add(scale, &columns.column(col));
                }
                out
            }
            SketchedJacobian::Projected { product, signs } => {
                product.dot(&signs.t()) / signs.ncols() as f64
            }
        }
    }

    /// Stored bytes: 8 per real, 8 per index, 1 bit per sign.
    pub fn byte_size(&self) -> usize {
        match self {
            SketchedJacobian::Columns { indices, columns, .. } => 8 * columns.len() + 8 * indices.len(),
            SketchedJacobian::Projected { product, signs } => 8 * product.len() + signs.len().div_ceil(8),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn trivial_dimension_is_identity() {
        let mut r = rng::seeded(1);
        for _ in 0..10 {
            let b = SamplingMatrix::sample_basis(1, 1, &mut r).unwrap();
            assert_eq!(b.to_dense(), array![[1.0]]);
            let p = SamplingMatrix::sample_rademacher(1, 1, &mut r).unwrap();
            assert_eq!(p.to_dense(), array![[1.0]]);
        }
    }

    #[test]
    fn rademacher_diagonal_is_one() {
        let mut r = rng::seeded(2);
        for (d, k) in [(3, 1), (4, 3), (7, 5)] {
            let p = SamplingMatrix::sample_rademacher(d, k, &mut r).unwrap().to_dense();
            for i in 0..d {
                assert_eq!(p[[i, i]], 1.0);
            }
        }
    }

    #[test]
    fn basis_d2_k1_outcomes() {
        let e1 = SamplingMatrix::basis_from_indices(2, vec![0]).unwrap().to_dense();
        let e2 = SamplingMatrix::basis_from_indices(2, vec![1]).unwrap().to_dense();
        assert_eq!(e1, array![[2.0, 0.0], [0.0, 0.0]]);
        assert_eq!((e1 + e2) / 2.0, Array2::<f64>::eye(2));
    }

    #[test]
    fn identity_reconstructs_p() {
        let mut r = rng::seeded(3);
        for p in [
            SamplingMatrix::sample_basis(4, 2, &mut r).unwrap(),
            SamplingMatrix::sample_rademacher(4, 2, &mut r).unwrap(),
        ] {
            let eye = Array2::<f64>::eye(4);
            let s = apply_right(eye.view(), &p).unwrap();
            let diff = &s.reconstruct() - &p.to_dense();
            assert!(diff.iter().all(|x| x.abs() < 1e-15));
            let f = p.factor();
            let diff = &f.dot(&f.t()) - &p.to_dense();
            assert!(diff.iter().all(|x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn basis_storage_is_k_columns() {
        let j = Array2::from_shape_fn((5, 10), |(i, c)| (i * 10 + c) as f64);
        let p = SamplingMatrix::basis_from_indices(10, vec![3, 3, 7]).unwrap();
        let s = apply_right(j.view(), &p).unwrap();
        assert_eq!(s.byte_size(), 5 * 3 * 8 + 3 * 8);
        let dense: usize = 5 * 10 * 8;
        assert!(s.byte_size() <= (3 * dense).div_ceil(10) + 3 * 8);
    }

    #[test]
    fn dimension_mismatch() {
        let j = Array2::<f64>::zeros((2, 3));
        let p = SamplingMatrix::basis_from_indices(4, vec![0]).unwrap();
        assert!(matches!(apply_right(j.view(), &p), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn reduced_dim_rounds_up() {
        assert_eq!(reduced_dim(0.1, 784).unwrap(), 79);
        assert_eq!(reduced_dim(0.1, 300).unwrap(), 30);
        assert_eq!(reduced_dim(0.1, 10).unwrap(), 1);
        assert_eq!(reduced_dim(0.1, 1).unwrap(), 1);
        assert_eq!(reduced_dim(1.0, 16).unwrap(), 16);
        assert_eq!(reduced_dim(0.05, 2048).unwrap(), 103);
        assert!(reduced_dim(0.0, 5).is_err());
        assert!(reduced_dim(1.5, 5).is_err());
    }
}
