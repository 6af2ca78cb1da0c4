//! Path sampling on the linearized graph.
//!
//! Vertices are visited in topological order. A vertex is processed only if
//! it is an input or at least one of its incoming edges was sampled; a
//! processed vertex with out-degree `d` draws `k` successors uniformly with
//! replacement and adds `d/k · ∂succ/∂v` to the sparse weight of each drawn
//! edge. Backpropagating over those weights gives an unbiased estimate of
//! the gradient, because each vertex's estimated adjoint has the exact
//! adjoint as its expectation (induction in reverse topological order).

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, LinearizedGraph, Op, VertexId};

/// Default cap on enumerated joint sampling outcomes.
pub const DEFAULT_OUTCOME_CAP: u64 = 1_000_000;

/// Sparse edge weights `Q` produced by one sampling sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseEdgeWeights {
    weights: Vec<Option<Array2<f64>>>,
    draws: Vec<u32>,
    touched: Vec<bool>,
}

impl SparseEdgeWeights {
    /// Accumulated weighted partial of edge `e`, `None` if never drawn.
    pub fn weight(&self, e: EdgeId) -> Option<&Array2<f64>> {
        self.weights[e].as_ref()
    }

    /// Number of times edge `e` was drawn.
    pub fn draws(&self, e: EdgeId) -> u32 {
        self.draws[e]
    }

    /// Whether vertex `v` has at least one sampled incoming edge.
    pub fn is_touched(&self, v: VertexId) -> bool {
        self.touched[v]
    }

    pub fn touched_count(&self) -> usize {
        self.touched.iter().filter(|&&t| t).count()
    }

    pub fn sampled_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.draws.iter().enumerate().filter(|(_, &c)| c > 0).map(|(e, _)| e)
    }

    /// Reverse accumulation over `Q` from the output.
    pub fn backpropagate(&self, graph: &LinearizedGraph) -> Result<Vec<Array1<f64>>> {
        graph.backpropagate(|e| Ok(self.weights[e].as_ref()))
    }

    fn from_draws(graph: &LinearizedGraph, k: usize, draws: Vec<u32>, touched: Vec<bool>) -> Result<Self> {
        let mut weights = vec![None; draws.len()];
        for (e, &count) in draws.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let edge = graph.edge(e);
            let partial = edge
                .partial
                .as_ref()
                .ok_or(Error::UnpopulatedPartial { src: edge.src, dst: edge.dst })?;
            let outdeg = graph.successors(edge.src).len();
            weights[e] = Some(partial * (outdeg as f64 / k as f64 * count as f64));
        }
        Ok(Self { weights, draws, touched })
    }
}

fn is_processed(graph: &LinearizedGraph, touched: &[bool], v: VertexId) -> bool {
    graph.vertex(v).op == Op::Input || touched[v]
}

/// One sampling sweep over `graph` with `k` draws per processed vertex.
pub fn sample_sparse_graph<R: Rng + ?Sized>(
    graph: &LinearizedGraph,
    k: usize,
    rng: &mut R,
) -> Result<SparseEdgeWeights> {
    sample_sparse_graph_with(graph, k, |_, outdeg| rng.random_range(0..outdeg))
}

/// Sampling sweep where `choose(v, outdeg)` picks the successor slot of
/// each draw at vertex `v`.
pub fn sample_sparse_graph_with<F>(graph: &LinearizedGraph, k: usize, mut choose: F) -> Result<SparseEdgeWeights>
where
    F: FnMut(VertexId, usize) -> usize,
{
    if k == 0 {
        return Err(Error::InvalidParameter("samples per vertex k must be >= 1".into()));
    }
    let n_edges = graph.edges().len();
    let mut draws = vec![0u32; n_edges];
    let mut touched = vec![false; graph.vertices().len()];
    for &v in graph.topo_order() {
        if !is_processed(graph, &touched, v) {
            continue;
        }
        let succ = graph.successors(v);
        if succ.is_empty() {
            continue;
        }
        for _ in 0..k {
            let slot = choose(v, succ.len());
            let e = *succ.get(slot).ok_or_else(|| {
                Error::InvalidParameter(format!("successor slot {slot} out of range at vertex {v}"))
            })?;
            draws[e] += 1;
            touched[graph.edge(e).dst] = true;
        }
    }
    SparseEdgeWeights::from_draws(graph, k, draws, touched)
}

/// Path-sampling gradient estimate for each vertex in `inputs`.
pub fn rad_gradient_path_sampling<R: Rng + ?Sized>(
    graph: &LinearizedGraph,
    inputs: &[VertexId],
    k: usize,
    rng: &mut R,
) -> Result<Vec<Array1<f64>>> {
    let q = sample_sparse_graph(graph, k, rng)?;
    let adj = q.backpropagate(graph)?;
    Ok(inputs.iter().map(|&v| adj[v].clone()).collect())
}

/// Exact mean and per-coordinate variance of an estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Array1<f64>,
    pub variance: Array1<f64>,
}

/// Every way to split `k` draws among `d` successors, with its multinomial
/// probability under uniform sampling with replacement.
fn compositions(d: usize, k: usize) -> Vec<(Vec<u32>, f64)> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(d, left - c, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(d, k as u32, &mut Vec::with_capacity(d), &mut raw);
    let ln_fact = |n: u32| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
    let base = ln_fact(k as u32) - k as f64 * (d as f64).ln();
    raw.into_iter()
        .map(|c| {
            let lp = base - c.iter().map(|&x| ln_fact(x)).sum::<f64>();
            (c, lp.exp())
        })
        .collect()
}

struct Enumeration<'a> {
    graph: &'a LinearizedGraph,
    k: usize,
    cap: u64,
    leaves: u64,
    outcomes: Vec<(f64, Vec<Array1<f64>>)>,
}

impl Enumeration<'_> {
    fn walk(&mut self, pos: usize, draws: &mut Vec<u32>, touched: &mut Vec<bool>, prob: f64) -> Result<()> {
        let topo = self.graph.topo_order();
        let mut pos = pos;
        // Skip vertices that draw nothing.
        while pos < topo.len() {
            let v = topo[pos];
            if is_processed(self.graph, touched, v) && !self.graph.successors(v).is_empty() {
                break;
            }
            pos += 1;
        }
        if pos == topo.len() {
            self.leaves += 1;
            if self.leaves > self.cap {
                return Err(Error::TooManyOutcomes { cap: self.cap });
            }
            let q = SparseEdgeWeights::from_draws(self.graph, self.k, draws.clone(), touched.clone())?;
            let adj = q.backpropagate(self.graph)?;
            let est = self.graph.inputs().iter().map(|&v| adj[v].clone()).collect();
            self.outcomes.push((prob, est));
            return Ok(());
        }
        let v = topo[pos];
        let succ = self.graph.successors(v).to_vec();
        for (split, p) in compositions(succ.len(), self.k) {
            let saved: Vec<bool> = succ.iter().map(|&e| touched[self.graph.edge(e).dst]).collect();
            for (&e, &c) in succ.iter().zip(&split) {
                draws[e] += c;
                if c > 0 {
                    touched[self.graph.edge(e).dst] = true;
                }
            }
            self.walk(pos + 1, draws, touched, prob * p)?;
            for ((&e, &c), &t) in succ.iter().zip(&split).zip(&saved) {
                draws[e] -= c;
                touched[self.graph.edge(e).dst] = t;
            }
        }
        Ok(())
    }
}

/// Exact mean and variance of the path-sampling estimator for every graph
/// input, by enumerating all joint sampling outcomes. Fails if more than
/// `cap` outcomes exist.
pub fn estimator_moments_exact(graph: &LinearizedGraph, k: usize, cap: u64) -> Result<Vec<Moments>> {
    if k == 0 {
        return Err(Error::InvalidParameter("samples per vertex k must be >= 1".into()));
    }
    let mut en = Enumeration { graph, k, cap, leaves: 0, outcomes: Vec::new() };
    let mut draws = vec![0u32; graph.edges().len()];
    let mut touched = vec![false; graph.vertices().len()];
    en.walk(0, &mut draws, &mut touched, 1.0)?;

    let inputs = graph.inputs();
    let mut moments: Vec<Moments> = inputs
        .iter()
        .map(|&v| {
            let dim = graph.vertex(v).dim;
            Moments { mean: Array1::zeros(dim), variance: Array1::zeros(dim) }
        })
        .collect();
    for (p, est) in &en.outcomes {
        for (m, x) in moments.iter_mut().zip(est) {
            m.mean.scaled_add(*p, x);
        }
    }
    for (p, est) in &en.outcomes {
        for (m, x) in moments.iter_mut().zip(est) {
            let dev = x - &m.mean;
            m.variance.scaled_add(*p, &(&dev * &dev));
        }
    }
    Ok(moments)
}

/// Number of joint outcomes [`estimator_moments_exact`] would enumerate.
pub fn outcome_count(graph: &LinearizedGraph, k: usize, cap: u64) -> Result<u64> {
    let mut en = Enumeration { graph, k, cap, leaves: 0, outcomes: Vec::new() };
    let mut draws = vec![0u32; graph.edges().len()];
    let mut touched = vec![false; graph.vertices().len()];
    en.walk(0, &mut draws, &mut touched, 1.0)?;
    Ok(en.leaves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph_family, example_function_graph, EdgeDistribution, GraphBuilder, GraphFamily};
    use crate::rng;
    use ndarray::array;

    fn chain(partials: &[f64]) -> LinearizedGraph {
        let mut b = GraphBuilder::new();
        let mut prev = b.input(1);
        for &p in partials {
            let v = b.vertex(1);
            b.scalar_edge(prev, v, p).unwrap();
            prev = v;
        }
        b.build(prev).unwrap()
    }

    #[test]
    fn compositions_are_a_distribution() {
        for d in 1..5 {
            for k in 1..4 {
                let c = compositions(d, k);
                let total: f64 = c.iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-14);
                assert!(c.iter().all(|(s, _)| s.iter().sum::<u32>() == k as u32));
            }
        }
        assert_eq!(compositions(3, 2).len(), 6);
    }

    #[test]
    fn chain_is_exact() {
        let g = chain(&[0.7, 1.3, -2.0]);
        let exact = g.input_gradients().unwrap()[0][0];
        let mut r = rng::seeded(3);
        for k in 1..4 {
            let q = sample_sparse_graph(&g, k, &mut r).unwrap();
            for e in 0..g.edges().len() {
                assert_eq!(q.weight(e), g.edge(e).partial.as_ref());
            }
            let est = rad_gradient_path_sampling(&g, &[0], k, &mut r).unwrap();
            assert!((est[0][0] - exact).abs() < 1e-15);
            let m = estimator_moments_exact(&g, k, DEFAULT_OUTCOME_CAP).unwrap();
            assert_eq!(m[0].variance[0], 0.0);
        }
    }

    #[test]
    fn example_graph_enumerated_mean_is_exact() {
        let mut g = example_function_graph();
        g.forward(&[array![0.5], array![1.0]]).unwrap();
        let exact = g.input_gradients().unwrap();
        for k in 1..=3 {
            let m = estimator_moments_exact(&g, k, DEFAULT_OUTCOME_CAP).unwrap();
            for (mi, ei) in m.iter().zip(&exact) {
                assert!((mi.mean[0] - ei[0]).abs() <= 1e-12 * ei[0].abs(), "k={k}");
            }
        }
    }

    #[test]
    fn independent_paths_three_outcomes() {
        let g = build_graph_family(GraphFamily::IndependentPaths, 3, 2, EdgeDistribution::default(), 5)
            .unwrap();
        // Branch products by hand: theta -> layer0[i] -> layer1[i] -> y.
        let p = |e: usize| g.edge(e).partial.as_ref().unwrap()[[0, 0]];
        let products: Vec<f64> = (0..3).map(|i| p(i) * p(3 + i) * p(6 + i)).collect();
        let exact: f64 = products.iter().sum();
        assert_eq!(outcome_count(&g, 1, 100).unwrap(), 3);
        let m = estimator_moments_exact(&g, 1, 100).unwrap();
        assert!((m[0].mean[0] - exact).abs() < 1e-12);
        let var: f64 = products.iter().map(|x| (3.0 * x - exact).powi(2)).sum::<f64>() / 3.0;
        assert!((m[0].variance[0] - var).abs() < 1e-12);

        let mut r = rng::seeded(11);
        for _ in 0..50 {
            let est = rad_gradient_path_sampling(&g, &[0], 1, &mut r).unwrap()[0][0];
            assert!(products.iter().any(|x| (3.0 * x - est).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_partials_give_zero() {
        let g = build_graph_family(GraphFamily::FullyInterleaved, 2, 3, EdgeDistribution::Constant(0.0), 0)
            .unwrap();
        let mut r = rng::seeded(0);
        for k in 1..3 {
            assert_eq!(rad_gradient_path_sampling(&g, &[0], k, &mut r).unwrap()[0][0], 0.0);
        }
    }

    #[test]
    fn skip_rule_bounds_touched_vertices() {
        for depth in [1, 3, 7] {
            let g = build_graph_family(GraphFamily::IndependentPaths, 4, depth, EdgeDistribution::default(), 1)
                .unwrap();
            let mut r = rng::seeded(depth as u64);
            for _ in 0..20 {
                let q = sample_sparse_graph(&g, 1, &mut r).unwrap();
                assert!(q.touched_count() <= depth + 2);
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let g = build_graph_family(GraphFamily::FullyInterleaved, 3, 4, EdgeDistribution::default(), 2).unwrap();
        let a = sample_sparse_graph(&g, 2, &mut rng::seeded(42)).unwrap();
        let b = sample_sparse_graph(&g, 2, &mut rng::seeded(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interleaved_variance_grows_with_depth() {
        let mut prev = -1.0;
        for depth in 2..=4 {
            let g = build_graph_family(GraphFamily::FullyInterleaved, 2, depth, EdgeDistribution::default(), 8)
                .unwrap();
            let exact = g.input_gradients().unwrap()[0][0];
            let m = estimator_moments_exact(&g, 1, DEFAULT_OUTCOME_CAP).unwrap();
            assert!((m[0].mean[0] - exact).abs() <= 1e-12 * exact.abs());
            assert!(m[0].variance[0] > prev, "depth {depth}");
            prev = m[0].variance[0];
        }
    }

    #[test]
    fn outcome_cap_is_enforced() {
        let g = build_graph_family(GraphFamily::FullyInterleaved, 3, 4, EdgeDistribution::default(), 2).unwrap();
        assert!(matches!(
            estimator_moments_exact(&g, 3, 10),
            Err(Error::TooManyOutcomes { cap: 10 })
        ));
    }

    #[test]
    fn rejects_zero_k() {
        let g = chain(&[1.0]);
        assert!(sample_sparse_graph(&g, 0, &mut rng::seeded(0)).is_err());
    }
}
