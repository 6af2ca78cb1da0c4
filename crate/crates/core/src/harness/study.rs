//! Path-sampling variance against graph depth.

use rayon::prelude::*;

use crate::error::Result;
use crate::graph::{build_graph_family, EdgeDistribution, GraphFamily};
use crate::path_sampler::{estimator_moments_exact, outcome_count, rad_gradient_path_sampling};
use crate::rng;

/// Joint sampling outcomes enumerated before falling back to Monte Carlo only.
pub const EXACT_VARIANCE_CAP: u64 = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRow {
    pub family: GraphFamily,
    pub depth: usize,
    pub width: usize,
    pub k: usize,
    pub paths: u128,
    pub gradient: f64,
    /// Mean of `(estimate − gradient)²` over the draws.
    pub empirical_variance: f64,
    /// Enumerated variance of the fixed graph, when the outcome space is
    /// small enough. `None` in joint mode.
    pub exact_variance: Option<f64>,
    pub draws: usize,
    pub joint: bool,
}

pub fn family_name(f: GraphFamily) -> &'static str {
    match f {
        GraphFamily::IndependentPaths => "independent-paths",
        GraphFamily::FullyInterleaved => "fully-interleaved",
    }
}

/// One row per (family, depth). Draw `i` samples with stream `i` of
/// `seed + 1`. With `joint`, draw `i` also builds its own graph from stream
/// `i` of `seed`, so the variance is averaged over edge weights too and
/// `gradient` reports the mean exact gradient.
pub fn variance_vs_depth(
    width: usize,
    depths: &[usize],
    k: usize,
    draws: usize,
    dist: EdgeDistribution,
    seed: u64,
    joint: bool,
) -> Result<Vec<VarianceRow>> {
    let mut rows = Vec::new();
    for family in [GraphFamily::IndependentPaths, GraphFamily::FullyInterleaved] {
        for &depth in depths {
            let fixed = build_graph_family(family, width, depth, dist, seed)?;
            let input = fixed.inputs()[0];
            let pairs = (0..draws)
                .into_par_iter()
                .map(|i| {
                    let own;
                    let graph = if joint {
                        own = build_graph_family(family, width, depth, dist, rand::Rng::random(&mut rng::stream(seed, i as u64)))?;
                        &own
                    } else {
                        &fixed
                    };
                    let g = graph.input_gradients()?[0][0];
                    let est = rad_gradient_path_sampling(graph, &[input], k, &mut rng::stream(seed + 1, i as u64))?[0][0];
                    Ok((g, est))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            let n = draws.max(1) as f64;
            let empirical_variance = pairs.iter().map(|(g, e)| (e - g).powi(2)).sum::<f64>() / n;
            let gradient = if joint { pairs.iter().map(|p| p.0).sum::<f64>() / n } else { fixed.input_gradients()?[0][0] };
            let exact_variance = match (joint, outcome_count(&fixed, k, EXACT_VARIANCE_CAP)) {
                (false, Ok(_)) => Some(estimator_moments_exact(&fixed, k, EXACT_VARIANCE_CAP)?[0].variance[0]),
                _ => None,
            };
            rows.push(VarianceRow {
                family,
                depth,
                width,
                k,
                paths: fixed.count_paths(input),
                gradient,
                empirical_variance,
                exact_variance,
                draws,
                joint,
            });
        }
    }
    Ok(rows)
}
