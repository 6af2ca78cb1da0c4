//! Synthetic graph families with controlled path structure.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::{GraphBuilder, LinearizedGraph, VertexId};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFamily {
    /// `width` disjoint chains of `depth` vertices between one input and the
    /// output: exactly `width` paths at any depth.
    IndependentPaths,
    /// `depth` layers of `width` vertices, consecutive layers fully
    /// connected: `width^depth` paths.
    FullyInterleaved,
}

/// Distribution of edge partials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeDistribution {
    Uniform { low: f64, high: f64 },
    /// ±1 with equal probability; every path product has magnitude one.
    RandomSign,
    Constant(f64),
}

impl Default for EdgeDistribution {
    fn default() -> Self {
        EdgeDistribution::Uniform { low: 0.5, high: 1.5 }
    }
}

impl EdgeDistribution {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EdgeDistribution::Uniform { low, high } => {
                Uniform::new_inclusive(low, high).expect("valid bounds").sample(rng)
            }
            EdgeDistribution::RandomSign => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EdgeDistribution::Constant(c) => c,
        }
    }
}

/// Scalar graph from `family` with a single input (id 0) and the output as
/// the last vertex.
pub fn build_graph_family(
    family: GraphFamily,
    width: usize,
    depth: usize,
    dist: EdgeDistribution,
    seed: u64,
) -> Result<LinearizedGraph> {
    if width == 0 || depth == 0 {
        return Err(Error::InvalidParameter(format!(
            "graph family needs width >= 1 and depth >= 1 (got {width}, {depth})"
        )));
    }
    if let EdgeDistribution::Uniform { low, high } = dist {
        if !(low <= high) || !low.is_finite() || !high.is_finite() {
            return Err(Error::InvalidParameter(format!("bad uniform bounds [{low}, {high}]")));
        }
    }
    let mut rng = rng::seeded(seed);
    let mut b = GraphBuilder::new();
    let theta = b.input(1);
    // Layer-major vertex ids so the id order is a topological order.
    let layers: Vec<Vec<VertexId>> =
        (0..depth).map(|_| (0..width).map(|_| b.vertex(1)).collect()).collect();
    let y = b.vertex(1);
    for &v in &layers[0] {
        b.scalar_edge(theta, v, dist.draw(&mut rng))?;
    }
    for l in 1..depth {
        match family {
            GraphFamily::IndependentPaths => {
                for i in 0..width {
                    b.scalar_edge(layers[l - 1][i], layers[l][i], dist.draw(&mut rng))?;
                }
            }
            GraphFamily::FullyInterleaved => {
                for &u in &layers[l - 1] {
                    for &v in &layers[l] {
                        b.scalar_edge(u, v, dist.draw(&mut rng))?;
                    }
                }
            }
        }
    }
    for &v in &layers[depth - 1] {
        b.scalar_edge(v, y, dist.draw(&mut rng))?;
    }
    b.build(y)
}
