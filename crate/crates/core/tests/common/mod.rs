//! Test-side oracles written independently of the library's own
//! enumeration and reverse-mode code.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use radiff::graph::{GraphBuilder, LinearizedGraph, VertexId};
use radiff::rng;

/// Random DAG with one or two inputs, vertices of dimension 1..=`max_dim`,
/// random matrix partials, and a scalar output reached by every sink.
pub fn random_dag(seed: u64, n: usize, p_edge: f64, max_dim: usize) -> LinearizedGraph {
    let mut r = rng::seeded(seed);
    let mut b = GraphBuilder::new();
    let n_inputs = r.random_range(1..=2);
    let mut dims = Vec::new();
    let mut ids = Vec::new();
    for i in 0..n {
        let dim = r.random_range(1..=max_dim);
        dims.push(dim);
        ids.push(if i < n_inputs { b.input(dim) } else { b.vertex(dim) });
    }
    let out = b.vertex(1);
    let mut has_out = vec![false; n];
    let mut has_in = vec![false; n];
    for j in n_inputs..n {
        for i in 0..j {
            if r.random_bool(p_edge) || (i + 1 == j && !has_in[j]) {
                let a = Array2::from_shape_simple_fn((dims[j], dims[i]), || r.random_range(-1.0..1.0));
                b.edge(ids[i], ids[j], a).unwrap();
                has_out[i] = true;
                has_in[j] = true;
            }
        }
    }
    for i in 0..n {
        if !has_out[i] || r.random_bool(0.2) {
            let a = Array2::from_shape_simple_fn((1, dims[i]), || r.random_range(-1.0..1.0));
            b.edge(ids[i], out, a).unwrap();
        }
    }
    b.build(out).unwrap()
}

/// Σ over paths of the ordered Jacobian product, by plain recursion.
pub fn path_sum(graph: &LinearizedGraph, input: VertexId) -> Array1<f64> {
    fn walk(g: &LinearizedGraph, v: VertexId, acc: Array2<f64>, out: &mut Array1<f64>) {
        if v == g.output() {
            *out += &acc.row(0);
            return;
        }
        for &e in g.successors(v) {
            let edge = g.edge(e);
            let a = edge.partial.as_ref().expect("populated partial");
            walk(g, edge.dst, a.dot(&acc), out);
        }
    }
    let dim = g_dim(graph, input);
    let mut out = Array1::zeros(dim);
    walk(graph, input, Array2::eye(dim), &mut out);
    out
}

fn g_dim(graph: &LinearizedGraph, v: VertexId) -> usize {
    graph.vertex(v).dim
}

/// Enumerates every sequence of uniform choices a randomized procedure can
/// make. `run` receives a chooser `choose(n) -> index in 0..n`; the result
/// lists each complete outcome with its probability. The sequence of calls
/// may depend on earlier answers.
pub fn enumerate_choices<T, F>(mut run: F, cap: usize) -> Vec<(f64, T)>
where
    F: FnMut(&mut dyn FnMut(usize) -> usize) -> T,
{
    let mut outcomes = Vec::new();
    let mut prefix: Vec<usize> = Vec::new();
    loop {
        let mut script: Vec<(usize, usize)> = Vec::new();
        let value = {
            let mut pos = 0;
            let mut choose = |n: usize| {
                assert!(n > 0);
                let c = if pos < prefix.len() { prefix[pos] } else { 0 };
                script.push((c, n));
                pos += 1;
                c
            };
            run(&mut choose)
        };
        let prob = script.iter().map(|&(_, n)| 1.0 / n as f64).product();
        outcomes.push((prob, value));
        assert!(outcomes.len() <= cap, "more than {cap} outcomes");
        // Odometer step on the last position that can still advance.
        match script.iter().rposition(|&(c, n)| c + 1 < n) {
            None => break,
            Some(i) => {
                prefix = script[..i].iter().map(|&(c, _)| c).collect();
                prefix.push(script[i].0 + 1);
            }
        }
    }
    outcomes
}

/// Probability-weighted mean of vector outcomes.
pub fn mean(outcomes: &[(f64, Vec<f64>)]) -> Vec<f64> {
    let n = outcomes[0].1.len();
    let mut m = vec![0.0; n];
    for (p, v) in outcomes {
        m.iter_mut().zip(v).for_each(|(a, b)| *a += p * b);
    }
    m
}

/// `max |a − b| / max(max |b|, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    diff / scale
}

/// Dense `(d/k) Σ e_i e_iᵀ`.
pub fn basis_matrix(d: usize, indices: &[usize]) -> Array2<f64> {
    let mut p = Array2::zeros((d, d));
    for &i in indices {
        p[[i, i]] += d as f64 / indices.len() as f64;
    }
    p
}

/// Dense `R Rᵀ` with `R = signs / √k`.
pub fn rademacher_matrix(signs: &Array2<f64>) -> Array2<f64> {
    signs.dot(&signs.t()) / signs.ncols() as f64
}

/// Plain-loop forward and backward of a ReLU MLP with softmax
/// cross-entropy averaged over the batch. `layers[i] = (W_i out×in, b_i)`.
/// Returns the loss and gradients in `[W0, b0, W1, b1, …]` order.
pub fn mlp_reference(layers: &[(Array2<f64>, Vec<f64>)], x: &Array2<f64>, y: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let n = x.nrows();
    let mut loss = 0.0;
    let mut grads: Vec<Vec<f64>> =
        layers.iter().flat_map(|(w, b)| [vec![0.0; w.len()], vec![0.0; b.len()]]).collect();
    for s in 0..n {
        let mut acts = vec![x.row(s).to_vec()];
        let mut pre = Vec::new();
        for (l, (w, b)) in layers.iter().enumerate() {
            let a = acts.last().unwrap();
            let z: Vec<f64> = (0..w.nrows()).map(|o| b[o] + (0..w.ncols()).map(|i| w[[o, i]] * a[i]).sum::<f64>()).collect();
            let last = l + 1 == layers.len();
            acts.push(if last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() });
            pre.push(z);
        }
        let z = acts.last().unwrap();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += (lse - z[y[s]]) / n as f64;
        let mut delta: Vec<f64> =
            z.iter().enumerate().map(|(j, v)| ((v - lse).exp() - if j == y[s] { 1.0 } else { 0.0 }) / n as f64).collect();
        for l in (0..layers.len()).rev() {
            let (w, _) = &layers[l];
            let a = &acts[l];
            for o in 0..w.nrows() {
                for i in 0..w.ncols() {
                    grads[2 * l][o * w.ncols() + i] += delta[o] * a[i];
                }
                grads[2 * l + 1][o] += delta[o];
            }
            if l > 0 {
                delta = (0..w.ncols())
                    .map(|i| {
                        let g: f64 = (0..w.nrows()).map(|o| w[[o, i]] * delta[o]).sum();
                        if pre[l - 1][i] > 0.0 { g } else { 0.0 }
                    })
                    .collect();
            }
        }
    }
    (loss, grads)
}
