//! Gradient-noise measurement and the mini-batch / path-sampling identity.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::{full_gradient, Batch, Gradients, Model, Strategy};
use crate::error::{Error, Result};
use crate::graph::GraphBuilder;
use crate::path_sampler::sample_sparse_graph_with;
use crate::rng;

/// Rows `indices` of `data` as a batch.
pub fn select(data: &Batch, indices: &[usize]) -> Result<Batch> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::InvalidParameter(format!("index {bad} outside dataset of {}", data.len())));
    }
    Batch::new(data.inputs.select(Axis(0), indices), indices.iter().map(|&i| data.labels[i]).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseProfile {
    pub layers: Vec<String>,
    /// Mean over draws of the per-layer mean squared deviation.
    pub mse: Vec<f64>,
    /// Per draw, per layer.
    pub per_draw: Vec<Vec<f64>>,
}

impl NoiseProfile {
    /// Standard error of each layer's mean.
    pub fn standard_error(&self) -> Vec<f64> {
        let n = self.per_draw.len() as f64;
        (0..self.layers.len())
            .map(|l| {
                if n < 2.0 {
                    return 0.0;
                }
                let m = self.mse[l];
                let var = self.per_draw.iter().map(|d| (d[l] - m).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

fn layer_mse(est: &Gradients, exact: &Gradients) -> Vec<f64> {
    exact
        .layer_groups()
        .iter()
        .map(|(_, blocks)| {
            let (mut sum, mut n) = (0.0, 0usize);
            for &b in blocks {
                for (a, e) in est.blocks[b].iter().zip(&exact.blocks[b]) {
                    sum += (a - e).powi(2);
                    n += 1;
                }
            }
            sum / n.max(1) as f64
        })
        .collect()
}

/// Per-layer MSE of `strategy`'s mini-batch estimate (batches of
/// `batch_size` drawn with replacement) against the full-dataset gradient.
pub fn gradient_noise_profile<R: Rng + ?Sized>(
    model: &Model,
    dataset: &Batch,
    strategy: &Strategy,
    batch_size: usize,
    n_draws: usize,
    rng: &mut R,
) -> Result<NoiseProfile> {
    let exact = full_gradient(model, dataset, 256)?;
    gradient_noise_against(model, dataset, &exact, strategy, batch_size, n_draws, rng.random())
}

/// [`gradient_noise_profile`] with a precomputed full gradient; draw `i`
/// uses stream `i` of `seed`.
pub fn gradient_noise_against(
    model: &Model,
    dataset: &Batch,
    exact: &Gradients,
    strategy: &Strategy,
    batch_size: usize,
    n_draws: usize,
    seed: u64,
) -> Result<NoiseProfile> {
    if batch_size == 0 || n_draws == 0 {
        return Err(Error::InvalidParameter("batch size and draw count must be positive".into()));
    }
    let per_draw = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let idx: Vec<usize> = (0..batch_size).map(|_| r.random_range(0..dataset.len())).collect();
            let (_, g) = model.gradient(&select(dataset, &idx)?, strategy, &mut r)?;
            Ok(layer_mse(&g, exact))
        })
        .collect::<Result<Vec<_>>>()?;
    let layers: Vec<String> = exact.layer_groups().into_iter().map(|(l, _)| l).collect();
    let mse = (0..layers.len())
        .map(|l| per_draw.iter().map(|d| d[l]).sum::<f64>() / n_draws as f64)
        .collect();
    Ok(NoiseProfile { layers, mse, per_draw })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    /// Backward over the selected elements' share of the dataset loss,
    /// scaled by `N/B`.
    pub minibatch: Vec<f64>,
    /// Path-sampling estimate on the dataset-level graph with the selected
    /// element paths drawn at the parameter vertex.
    pub path_sampling: Vec<f64>,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
}

/// Checks that a mini-batch gradient is the path-sampling estimator of the
/// dataset-level graph `θ → ℓ_n → L = (1/N) Σ ℓ_n` with `B` draws at `θ`.
pub fn mini_batch_as_path_sampling_check(model: &Model, dataset: &Batch, batch: &[usize]) -> Result<EquivalenceReport> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let n = dataset.len();
    let grad_of = |idx: &[usize]| -> Result<Vec<f64>> {
        let (_, tape) = model.forward(&select(dataset, idx)?, &Strategy::baseline(), &mut super::ScriptedSampler::default())?;
        Ok(model.backward(&tape)?.flat())
    };

    // The batch loss is the selected share of the dataset loss times N/B.
    let minibatch = grad_of(batch)?;

    let mut gb = GraphBuilder::new();
    let theta = gb.input(minibatch.len());
    let mut losses = Vec::with_capacity(n);
    for i in 0..n {
        let g = Array1::from(grad_of(&[i])?).insert_axis(Axis(0));
        losses.push(gb.linear(1, &[(theta, g)])?);
    }
    let terms: Vec<_> = losses.iter().map(|&l| (l, Array2::from_elem((1, 1), 1.0 / n as f64))).collect();
    let out = gb.linear(1, &terms)?;
    let graph = gb.build(out)?;
    let mut script = batch.iter().copied();
    let q = sample_sparse_graph_with(&graph, batch.len(), |v, _| if v == theta { script.next().unwrap_or(0) } else { 0 })?;
    let path_sampling = q.backpropagate(&graph)?[theta].to_vec();

    let max_abs_diff = minibatch.iter().zip(&path_sampling).map(|(a, p)| (a - p).abs()).fold(0.0, f64::max);
    let scale = minibatch.iter().map(|a| a.abs()).fold(0.0, f64::max);
    let max_rel_diff = if scale > 0.0 { max_abs_diff / scale } else { max_abs_diff };
    Ok(EquivalenceReport { minibatch, path_sampling, max_abs_diff, max_rel_diff })
}
