//! Layer kernels on row-major `(channels, height, width)` element buffers.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::arch::{Shape, KERNEL, PADDING};

const TAPS: usize = KERNEL * KERNEL;

/// `(c·25) × (h·w)` patch matrix of one element.
pub fn im2col(x: ArrayView1<f64>, s: Shape) -> Array2<f64> {
    let (h, w) = (s.height as isize, s.width as isize);
    let mut col = Array2::zeros((s.channels * TAPS, s.spatial()));
    for c in 0..s.channels {
        let base = c * s.spatial();
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let mut row = col.row_mut(c * TAPS + ky * KERNEL + kx);
                let dy = ky as isize - PADDING as isize;
                let dx = kx as isize - PADDING as isize;
                for y in 0..h {
                    let sy = y + dy;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx + dx;
                        if sx >= 0 && sx < w {
                            row[(y * w + xx) as usize] = x[base + (sy * w + sx) as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`].
pub fn col2im(col: ArrayView2<f64>, s: Shape) -> Vec<f64> {
    let (h, w) = (s.height as isize, s.width as isize);
    let mut out = vec![0.0; s.len()];
    for c in 0..s.channels {
        let base = c * s.spatial();
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = col.row(c * TAPS + ky * KERNEL + kx);
                let dy = ky as isize - PADDING as isize;
                let dx = kx as isize - PADDING as isize;
                for y in 0..h {
                    let sy = y + dy;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx + dx;
                        if sx >= 0 && sx < w {
                            out[base + (sy * w + sx) as usize] += row[(y * w + xx) as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Batched 5×5 convolution: `weight` is `out × (c·25)`.
pub fn conv_forward(x: ArrayView2<f64>, s: Shape, weight: ArrayView2<f64>, bias: ArrayView1<f64>) -> Array2<f64> {
    let out_c = weight.nrows();
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|b| {
            let xr = x.row(b);
            let mut y = weight.dot(&im2col(xr, s));
            for (mut r, &b) in y.axis_iter_mut(Axis(0)).zip(bias) {
                r += b;
            }
            y.into_raw_vec_and_offset().0
        })
        .collect();
    stack(rows, out_c * s.spatial())
}

pub struct ConvGrads {
    pub weight: Array2<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Array2<f64>>,
}

/// Gradients of a convolution given the (reconstructed) input and output
/// adjoint `dy` (`batch × out·h·w`).
pub fn conv_backward(
    x: ArrayView2<f64>,
    s: Shape,
    weight: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    need_input: bool,
) -> ConvGrads {
    let out_c = weight.nrows();
    let parts: Vec<(Array2<f64>, Vec<f64>, Option<Vec<f64>>)> = (0..x.nrows())
        .into_par_iter()
        .map(|b| {
            let (xr, dyr) = (x.row(b), dy.row(b));
            let d = dyr.to_shape((out_c, s.spatial())).expect("contiguous adjoint row");
            let dw = d.dot(&im2col(xr, s).t());
            let db = d.sum_axis(Axis(1)).to_vec();
            let dx = need_input.then(|| col2im(weight.t().dot(&d).view(), s));
            (dw, db, dx)
        })
        .collect();
    let mut gw = Array2::zeros(weight.dim());
    let mut gb = vec![0.0; out_c];
    let mut dx_rows = Vec::with_capacity(parts.len());
    for (dw, db, dx) in parts {
        gw += &dw;
        gb.iter_mut().zip(&db).for_each(|(a, b)| *a += b);
        if let Some(dx) = dx {
            dx_rows.push(dx);
        }
    }
    let input = need_input.then(|| stack(dx_rows, s.len()));
    ConvGrads { weight: gw, bias: gb, input }
}

fn stack(rows: Vec<Vec<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    Array2::from_shape_vec((n, width), rows.concat()).expect("uniform row widths")
}

pub fn avgpool_forward(x: ArrayView2<f64>, s: Shape) -> Array2<f64> {
    let (oh, ow) = (s.height / 2, s.width / 2);
    Array2::from_shape_fn((x.nrows(), s.channels * oh * ow), |(b, o)| {
        let c = o / (oh * ow);
        let (y, xx) = ((o % (oh * ow)) / ow, o % ow);
        let at = |dy: usize, dx: usize| x[[b, c * s.spatial() + (2 * y + dy) * s.width + 2 * xx + dx]];
        0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1))
    })
}

/// Adjoint of [`avgpool_forward`]; `s` is the pool input shape.
pub fn avgpool_backward(dy: ArrayView2<f64>, s: Shape) -> Array2<f64> {
    let (oh, ow) = (s.height / 2, s.width / 2);
    Array2::from_shape_fn((dy.nrows(), s.len()), |(b, i)| {
        let c = i / s.spatial();
        let (y, xx) = ((i % s.spatial()) / s.width, i % s.width);
        0.25 * dy[[b, c * oh * ow + (y / 2) * ow + xx / 2]]
    })
}

pub fn relu(x: ArrayView2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn log_softmax_row(z: ArrayView1<f64>) -> Vec<f64> {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Mean cross-entropy of `softmax(logits)` against `labels`.
pub fn softmax_xent(logits: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(z, &y)| -log_softmax_row(z)[y])
        .sum();
    total / labels.len() as f64
}

/// `(softmax(z) − onehot(y)) / batch`.
pub fn softmax_xent_grad(logits: ArrayView2<f64>, labels: &[usize]) -> Array2<f64> {
    let b = labels.len() as f64;
    let mut g = Array2::zeros(logits.dim());
    for ((z, &y), mut row) in logits.axis_iter(Axis(0)).zip(labels).zip(g.axis_iter_mut(Axis(0))) {
        for (j, lp) in log_softmax_row(z).into_iter().enumerate() {
            row[j] = (lp.exp() - if j == y { 1.0 } else { 0.0 }) / b;
        }
    }
    g
}

pub fn argmax(z: ArrayView1<f64>) -> usize {
    z.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn im2col_adjoint() {
        let s = Shape::image(2, 4, 3);
        let x = Array1::from_shape_fn(s.len(), |i| (i as f64 * 0.37).sin());
        let col = im2col(x.view(), s);
        let g = Array2::from_shape_fn(col.dim(), |(i, j)| ((i * 7 + j) as f64 * 0.11).cos());
        let lhs: f64 = (&col * &g).sum();
        let back = col2im(g.view(), s);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn centre_tap_is_identity() {
        let s = Shape::image(1, 3, 3);
        let x = Array2::from_shape_fn((1, 9), |(_, i)| i as f64);
        let mut w = Array2::zeros((1, 25));
        w[[0, 12]] = 1.0;
        let y = conv_forward(x.view(), s, w.view(), array![0.5].view());
        assert_eq!(y, &x + 0.5);
    }

    #[test]
    fn pool_adjoint() {
        let s = Shape::image(2, 4, 4);
        let x = Array2::from_shape_fn((2, s.len()), |(b, i)| (b * 100 + i) as f64);
        let y = avgpool_forward(x.view(), s);
        assert_eq!(y.dim(), (2, 8));
        assert_eq!(y[[0, 0]], 0.25 * (0.0 + 1.0 + 4.0 + 5.0));
        let g = Array2::from_shape_fn(y.dim(), |(b, i)| (b + i) as f64 * 0.3);
        let lhs = (&y * &g).sum();
        let rhs = (&x * &avgpool_backward(g.view(), s)).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn xent_uniform_logits() {
        let z = Array2::zeros((2, 4));
        assert!((softmax_xent(z.view(), &[0, 3]) - 4f64.ln()).abs() < 1e-15);
        let g = softmax_xent_grad(z.view(), &[0, 3]);
        assert!((g[[0, 0]] - (0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((g.sum()).abs() < 1e-15);
    }
}
