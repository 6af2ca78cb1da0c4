//! Linearized computational graphs.
//!
//! A [`LinearizedGraph`] is a DAG whose vertices hold (vector) values and
//! whose edges hold the local Jacobian `∂z_dst/∂z_src` of the operation that
//! produced the destination. The gradient of the scalar output with respect
//! to an input is the sum over all input→output paths of the ordered product
//! of edge partials; [`LinearizedGraph::reverse_mode_exact`] evaluates that
//! sum by dynamic programming and [`LinearizedGraph::path_sum_bruteforce`]
//! evaluates it literally.
//!
//! Graphs are built with [`GraphBuilder`], either from differentiable
//! operations (partials filled in by [`LinearizedGraph::forward`]) or from
//! raw constant partials (`linear` vertices).

mod families;
mod text;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub use families::{build_graph_family, EdgeDistribution, GraphFamily};
pub use text::{read_graph, write_graph};

pub type VertexId = usize;
pub type EdgeId = usize;

/// Default cap on enumerated input→output paths.
pub const DEFAULT_PATH_CAP: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexKind {
    Input,
    Intermediate,
    Output,
}

/// Operation producing a vertex value from its predecessors (in edge order).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Input,
    /// `Σ_e A_e · z_src(e)` with constant edge partials `A_e`.
    Linear,
    Add,
    /// Elementwise product of two predecessors.
    Mul,
    Exp,
    Sin,
    Tanh,
    /// Sum of all entries; produces a scalar.
    Sum,
}

impl Op {
    fn arity(self) -> Option<usize> {
        match self {
            Op::Input => Some(0),
            Op::Linear => None,
            Op::Add | Op::Mul => Some(2),
            Op::Exp | Op::Sin | Op::Tanh | Op::Sum => Some(1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
    pub dim: usize,
    pub op: Op,
    pub value: Option<Array1<f64>>,
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub src: VertexId,
    pub dst: VertexId,
    /// Local Jacobian of shape `(dim(dst), dim(src))`.
    pub partial: Option<Array2<f64>>,
}

/// Incrementally constructs a graph. Operation helpers only reference
/// existing vertices, so graphs built through them are acyclic by
/// construction; [`GraphBuilder::edge`] allows arbitrary raw edges and
/// cycles are rejected by [`GraphBuilder::build`].
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_vertex(&mut self, dim: usize, op: Op) -> VertexId {
        let id = self.vertices.len();
        let kind = if op == Op::Input { VertexKind::Input } else { VertexKind::Intermediate };
        self.vertices.push(Vertex { id, kind, dim, op, value: None });
        id
    }

    fn check(&self, v: VertexId) -> Result<usize> {
        self.vertices
            .get(v)
            .map(|x| x.dim)
            .ok_or_else(|| Error::InvalidGraph(format!("unknown vertex {v}")))
    }

    fn push_edge(&mut self, src: VertexId, dst: VertexId, partial: Option<Array2<f64>>) {
        self.edges.push(Edge { src, dst, partial });
    }

    pub fn input(&mut self, dim: usize) -> VertexId {
        self.push_vertex(dim, Op::Input)
    }

    /// A linear vertex with no incoming edges yet; attach edges with [`Self::edge`].
    pub fn vertex(&mut self, dim: usize) -> VertexId {
        self.push_vertex(dim, Op::Linear)
    }

    /// Raw edge into a linear vertex with a constant partial.
    pub fn edge(&mut self, src: VertexId, dst: VertexId, partial: Array2<f64>) -> Result<EdgeId> {
        let sd = self.check(src)?;
        let dd = self.check(dst)?;
        if self.vertices[dst].op != Op::Linear {
            return Err(Error::InvalidGraph(format!(
                "raw edges may only target linear vertices (vertex {dst} is {:?})",
                self.vertices[dst].op
            )));
        }
        if partial.dim() != (dd, sd) {
            return Err(Error::DimensionMismatch(format!(
                "partial for edge {src}->{dst} has shape {:?}, expected ({dd}, {sd})",
                partial.dim()
            )));
        }
        self.push_edge(src, dst, Some(partial));
        Ok(self.edges.len() - 1)
    }

    /// Scalar edge convenience for graphs of scalar vertices.
    pub fn scalar_edge(&mut self, src: VertexId, dst: VertexId, partial: f64) -> Result<EdgeId> {
        self.edge(src, dst, Array2::from_elem((1, 1), partial))
    }

    /// `Σ A_i · z_i`.
    pub fn linear(&mut self, dim: usize, terms: &[(VertexId, Array2<f64>)]) -> Result<VertexId> {
        let v = self.vertex(dim);
        for (src, a) in terms {
            self.edge(*src, v, a.clone())?;
        }
        Ok(v)
    }

    fn unary(&mut self, op: Op, a: VertexId) -> Result<VertexId> {
        let dim = self.check(a)?;
        let out_dim = if op == Op::Sum { 1 } else { dim };
        let v = self.push_vertex(out_dim, op);
        self.push_edge(a, v, None);
        Ok(v)
    }

    fn binary(&mut self, op: Op, a: VertexId, b: VertexId) -> Result<VertexId> {
        let da = self.check(a)?;
        let db = self.check(b)?;
        if da != db {
            return Err(Error::DimensionMismatch(format!(
                "{op:?} operands have dims {da} and {db}"
            )));
        }
        let v = self.push_vertex(da, op);
        self.push_edge(a, v, None);
        self.push_edge(b, v, None);
        Ok(v)
    }

    pub fn add(&mut self, a: VertexId, b: VertexId) -> Result<VertexId> {
        self.binary(Op::Add, a, b)
    }

    pub fn mul(&mut self, a: VertexId, b: VertexId) -> Result<VertexId> {
        self.binary(Op::Mul, a, b)
    }

    pub fn exp(&mut self, a: VertexId) -> Result<VertexId> {
        self.unary(Op::Exp, a)
    }

    pub fn sin(&mut self, a: VertexId) -> Result<VertexId> {
        self.unary(Op::Sin, a)
    }

    pub fn tanh(&mut self, a: VertexId) -> Result<VertexId> {
        self.unary(Op::Tanh, a)
    }

    pub fn sum(&mut self, a: VertexId) -> Result<VertexId> {
        self.unary(Op::Sum, a)
    }

    /// Set a vertex value ahead of time (used when loading frozen graphs).
    pub fn set_value(&mut self, v: VertexId, value: Array1<f64>) -> Result<()> {
        let dim = self.check(v)?;
        if value.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "value for vertex {v} has length {}, expected {dim}",
                value.len()
            )));
        }
        self.vertices[v].value = Some(value);
        Ok(())
    }

    /// Freeze the graph with `output` as its scalar output vertex.
    pub fn build(mut self, output: VertexId) -> Result<LinearizedGraph> {
        let out_dim = self.check(output)?;
        if out_dim != 1 {
            return Err(Error::InvalidGraph(format!(
                "output vertex {output} has dim {out_dim}; a scalar output is required"
            )));
        }
        if self.vertices[output].op == Op::Input {
            return Err(Error::InvalidGraph("output vertex cannot be an input".into()));
        }
        self.vertices[output].kind = VertexKind::Output;

        let n = self.vertices.len();
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for (id, e) in self.edges.iter().enumerate() {
            succ[e.src].push(id);
            pred[e.dst].push(id);
        }
        for v in &self.vertices {
            if let Some(arity) = v.op.arity() {
                if pred[v.id].len() != arity {
                    return Err(Error::InvalidGraph(format!(
                        "vertex {} ({:?}) has {} inputs, expected {arity}",
                        v.id,
                        v.op,
                        pred[v.id].len()
                    )));
                }
            }
        }
        let inputs: Vec<VertexId> =
            self.vertices.iter().filter(|v| v.op == Op::Input).map(|v| v.id).collect();
        if inputs.is_empty() {
            return Err(Error::InvalidGraph("graph has no input vertices".into()));
        }

        let topo = topo_sort(n, &self.edges, &succ, &pred)?;

        let mut reaches_output = vec![false; n];
        reaches_output[output] = true;
        for &v in topo.iter().rev() {
            if succ[v].iter().any(|&e| reaches_output[self.edges[e].dst]) {
                reaches_output[v] = true;
            }
        }

        Ok(LinearizedGraph {
            vertices: self.vertices,
            edges: self.edges,
            succ,
            pred,
            topo,
            output,
            inputs,
            reaches_output,
        })
    }
}

/// Kahn's algorithm, ties broken by ascending vertex id.
fn topo_sort(
    n: usize,
    edges: &[Edge],
    succ: &[Vec<EdgeId>],
    pred: &[Vec<EdgeId>],
) -> Result<Vec<VertexId>> {
    let mut indeg: Vec<usize> = pred.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<VertexId>> =
        (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &e in &succ[v] {
            let d = edges[e].dst;
            indeg[d] -= 1;
            if indeg[d] == 0 {
                ready.push(Reverse(d));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Locate a back-edge among the vertices left over.
    let blocked: Vec<bool> = indeg.iter().map(|&d| d > 0).collect();
    let start = (0..n).find(|&v| blocked[v]).expect("leftover vertex");
    let mut state = vec![0u8; n]; // 0 unseen, 1 on stack, 2 done
    let mut stack: Vec<(VertexId, usize)> = vec![(start, 0)];
    state[start] = 1;
    while let Some(&mut (v, ref mut next)) = stack.last_mut() {
        if *next < succ[v].len() {
            let e = succ[v][*next];
            *next += 1;
            let d = edges[e].dst;
            if !blocked[d] {
                continue;
            }
            match state[d] {
                1 => return Err(Error::Cycle { from: v, to: d }),
                0 => {
                    state[d] = 1;
                    stack.push((d, 0));
                }
                _ => {}
            }
        } else {
            state[v] = 2;
            stack.pop();
        }
    }
    unreachable!("leftover vertices always contain a cycle")
}

#[derive(Clone, Debug)]
pub struct LinearizedGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    succ: Vec<Vec<EdgeId>>,
    pred: Vec<Vec<EdgeId>>,
    topo: Vec<VertexId>,
    output: VertexId,
    inputs: Vec<VertexId>,
    reaches_output: Vec<bool>,
}

impl LinearizedGraph {
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }

    pub fn successors(&self, v: VertexId) -> &[EdgeId] {
        &self.succ[v]
    }

    pub fn predecessors(&self, v: VertexId) -> &[EdgeId] {
        &self.pred[v]
    }

    pub fn topo_order(&self) -> &[VertexId] {
        &self.topo
    }

    pub fn output(&self) -> VertexId {
        self.output
    }

    pub fn inputs(&self) -> &[VertexId] {
        &self.inputs
    }

    /// False for inputs with no path to the output.
    pub fn is_connected(&self, v: VertexId) -> bool {
        self.reaches_output[v]
    }

    /// Recompute the deterministic topological order.
    pub fn topological_sort(&self) -> Result<Vec<VertexId>> {
        topo_sort(self.vertices.len(), &self.edges, &self.succ, &self.pred)
    }

    /// Evaluate the graph at `inputs` (one vector per input vertex, in
    /// [`Self::inputs`] order), populating vertex values and edge partials.
    /// Returns the output value.
    pub fn forward(&mut self, inputs: &[Array1<f64>]) -> Result<f64> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input values for {} input vertices",
                inputs.len(),
                self.inputs.len()
            )));
        }
        for (&v, x) in self.inputs.iter().zip(inputs) {
            if x.len() != self.vertices[v].dim {
                return Err(Error::DimensionMismatch(format!(
                    "input {v} expects dim {}, got {}",
                    self.vertices[v].dim,
                    x.len()
                )));
            }
            self.vertices[v].value = Some(x.clone());
        }
        for i in 0..self.topo.len() {
            let v = self.topo[i];
            let op = self.vertices[v].op;
            if op == Op::Input {
                continue;
            }
            let args: Vec<&Array1<f64>> = self.pred[v]
                .iter()
                .map(|&e| {
                    let s = self.edges[e].src;
                    self.vertices[s].value.as_ref().ok_or(Error::UnpopulatedValue(s))
                })
                .collect::<Result<_>>()?;
            let (value, partials) = eval_op(op, self.vertices[v].dim, &args, &self.pred[v], &self.edges)?;
            if let Some(partials) = partials {
                for (&e, p) in self.pred[v].iter().zip(partials) {
                    self.edges[e].partial = Some(p);
                }
            }
            self.vertices[v].value = Some(value);
        }
        let out = self.vertices[self.output].value.as_ref().expect("output evaluated");
        Ok(out[0])
    }

    /// Output value at `inputs` without touching this graph's stored state.
    pub fn evaluate(&self, inputs: &[Array1<f64>]) -> Result<f64> {
        self.clone().forward(inputs)
    }

    /// Exact adjoints `∂y/∂z_v` for every vertex (zero where no path reaches
    /// the output).
    pub fn reverse_mode_exact(&self) -> Result<Vec<Array1<f64>>> {
        self.backpropagate(|e| {
            let edge = &self.edges[e];
            edge.partial
                .as_ref()
                .map(Some)
                .ok_or(Error::UnpopulatedPartial { src: edge.src, dst: edge.dst })
        })
    }

    /// Gradient of the output with respect to each input vertex.
    pub fn input_gradients(&self) -> Result<Vec<Array1<f64>>> {
        let adj = self.reverse_mode_exact()?;
        Ok(self.inputs.iter().map(|&v| adj[v].clone()).collect())
    }

    /// Reverse accumulation with caller-supplied edge partials; `None` means
    /// the edge carries zero.
    pub(crate) fn backpropagate<'a, F>(&'a self, mut partial: F) -> Result<Vec<Array1<f64>>>
    where
        F: FnMut(EdgeId) -> Result<Option<&'a Array2<f64>>>,
    {
        let mut adj: Vec<Array1<f64>> =
            self.vertices.iter().map(|v| Array1::zeros(v.dim)).collect();
        adj[self.output][0] = 1.0;
        for &v in self.topo.iter().rev() {
            if self.pred[v].is_empty() || adj[v].iter().all(|&a| a == 0.0) {
                continue;
            }
            let av = adj[v].clone();
            for &e in &self.pred[v] {
                if let Some(a) = partial(e)? {
                    let src = self.edges[e].src;
                    adj[src] += &a.t().dot(&av);
                }
            }
        }
        Ok(adj)
    }

    /// Number of input→output paths starting at `input` (saturating).
    pub fn count_paths(&self, input: VertexId) -> u128 {
        self.paths_to_output()[input]
    }

    fn paths_to_output(&self) -> Vec<u128> {
        let mut count = vec![0u128; self.vertices.len()];
        count[self.output] = 1;
        for &v in self.topo.iter().rev() {
            if v == self.output {
                continue;
            }
            count[v] = self.succ[v]
                .iter()
                .fold(0u128, |acc, &e| acc.saturating_add(count[self.edges[e].dst]));
        }
        count
    }

    /// Sum over every input→output path of the ordered product of edge
    /// partials. Intended as a test oracle; refuses graphs with more than
    /// `cap` paths from `input`.
    pub fn path_sum_bruteforce(&self, input: VertexId, cap: u128) -> Result<Array1<f64>> {
        let counts = self.paths_to_output();
        let total = counts[input];
        if total > cap {
            return Err(Error::TooManyPaths { count: total, cap });
        }
        let dim = self.vertices[input].dim;
        let mut sum = Array1::zeros(dim);
        // Depth-first over (vertex, accumulated Jacobian d z_vertex / d input).
        let mut stack: Vec<(VertexId, Array2<f64>)> = vec![(input, Array2::eye(dim))];
        while let Some((v, jac)) = stack.pop() {
            if v == self.output {
                sum += &jac.row(0);
                continue;
            }
            for &e in &self.succ[v] {
                let edge = &self.edges[e];
                if counts[edge.dst] == 0 {
                    continue;
                }
                let a = edge
                    .partial
                    .as_ref()
                    .ok_or(Error::UnpopulatedPartial { src: edge.src, dst: edge.dst })?;
                stack.push((edge.dst, a.dot(&jac)));
            }
        }
        Ok(sum)
    }
}

fn diag(v: &Array1<f64>) -> Array2<f64> {
    Array2::from_diag(v)
}

/// Value and (for non-linear ops) local partials, one per incoming edge.
fn eval_op(
    op: Op,
    dim: usize,
    args: &[&Array1<f64>],
    pred: &[EdgeId],
    edges: &[Edge],
) -> Result<(Array1<f64>, Option<Vec<Array2<f64>>>)> {
    Ok(match op {
        Op::Input => unreachable!("inputs are set directly"),
        Op::Linear => {
            let mut value = Array1::zeros(dim);
            for (&e, x) in pred.iter().zip(args) {
                let edge = &edges[e];
                let a = edge
                    .partial
                    .as_ref()
                    .ok_or(Error::UnpopulatedPartial { src: edge.src, dst: edge.dst })?;
                value += &a.dot(*x);
            }
            (value, None)
        }
        Op::Add => {
            let eye = Array2::eye(dim);
            (args[0] + args[1], Some(vec![eye.clone(), eye]))
        }
        Op::Mul => (args[0] * args[1], Some(vec![diag(args[1]), diag(args[0])])),
        Op::Exp => {
            let v = args[0].mapv(f64::exp);
            let d = diag(&v);
            (v, Some(vec![d]))
        }
        Op::Sin => (args[0].mapv(f64::sin), Some(vec![diag(&args[0].mapv(f64::cos))])),
        Op::Tanh => {
            let v = args[0].mapv(f64::tanh);
            let d = diag(&v.mapv(|t| 1.0 - t * t));
            (v, Some(vec![d]))
        }
        Op::Sum => {
            let n = args[0].len();
            (Array1::from_elem(1, args[0].sum()), Some(vec![Array2::ones((1, n))]))
        }
    })
}

/// The example function `f(x1, x2) = a·d` with `a = exp(x1)`, `b = sin(x2)`,
/// `c = b·x2`, `d = a·c`, i.e. `f = e^{2 x1} · x2 · sin(x2)`.
///
/// Vertex ids are `[x1, x2, a, b, c, d, f]` in that order.
pub fn example_function_graph() -> LinearizedGraph {
    let mut g = GraphBuilder::new();
    let x1 = g.input(1);
    let x2 = g.input(1);
    let a = g.exp(x1).unwrap();
    let b = g.sin(x2).unwrap();
    let c = g.mul(b, x2).unwrap();
    let d = g.mul(a, c).unwrap();
    let f = g.mul(a, d).unwrap();
    g.build(f).expect("example graph is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn at(x1: f64, x2: f64) -> LinearizedGraph {
        let mut g = example_function_graph();
        g.forward(&[array![x1], array![x2]]).unwrap();
        g
    }

    #[test]
    fn example_graph_is_already_topological() {
        let g = example_function_graph();
        assert_eq!(g.topo_order(), &[0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(g.topological_sort().unwrap(), g.topological_sort().unwrap());
    }

    #[test]
    fn single_vertex_sort() {
        assert_eq!(topo_sort(1, &[], &[vec![]], &[vec![]]).unwrap(), vec![0]);
    }

    #[test]
    fn back_edge_is_reported() {
        // Same shape as the example graph, built from raw edges, plus f -> a.
        let mut b = GraphBuilder::new();
        let x1 = b.input(1);
        let x2 = b.input(1);
        let a = b.vertex(1);
        let bb = b.vertex(1);
        let c = b.vertex(1);
        let d = b.vertex(1);
        let f = b.vertex(1);
        for (s, t) in [(x1, a), (x2, bb), (bb, c), (x2, c), (a, d), (c, d), (a, f), (d, f), (f, a)] {
            b.scalar_edge(s, t, 1.0).unwrap();
        }
        match b.build(f) {
            Err(Error::Cycle { from, to }) => assert_eq!((from, to), (f, a)),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn example_gradient_matches_closed_form() {
        let (x1, x2) = (0.5, 1.0);
        let g = at(x1, x2);
        let grads = g.input_gradients().unwrap();
        let df_dx1 = 2.0 * (2.0 * x1).exp() * x2 * x2.sin();
        let df_dx2 = (2.0 * x1).exp() * (x2.sin() + x2 * x2.cos());
        assert!((grads[0][0] - df_dx1).abs() < 1e-12 * df_dx1.abs());
        assert!((grads[1][0] - df_dx2).abs() < 1e-12 * df_dx2.abs());
        assert!((grads[0][0] - 4.574_710_574_357_685).abs() < 1e-12);
    }

    #[test]
    fn example_has_four_paths() {
        let g = at(0.5, 1.0);
        assert_eq!(g.count_paths(0) + g.count_paths(1), 4);
        for (i, &v) in g.inputs().iter().enumerate() {
            let brute = g.path_sum_bruteforce(v, DEFAULT_PATH_CAP).unwrap();
            let exact = &g.input_gradients().unwrap()[i];
            assert!((brute[0] - exact[0]).abs() <= 1e-12 * exact[0].abs());
        }
    }

    #[test]
    fn identity_chain() {
        let mut b = GraphBuilder::new();
        let t = b.input(1);
        let z = b.vertex(1);
        let y = b.vertex(1);
        b.scalar_edge(t, z, 1.0).unwrap();
        b.scalar_edge(z, y, 1.0).unwrap();
        let g = b.build(y).unwrap();
        assert_eq!(g.input_gradients().unwrap()[0][0], 1.0);
        assert_eq!(g.count_paths(t), 1);
    }

    #[test]
    fn disconnected_input_has_zero_adjoint() {
        let mut b = GraphBuilder::new();
        let t = b.input(1);
        let lost = b.input(2);
        let y = b.vertex(1);
        b.scalar_edge(t, y, 3.0).unwrap();
        let g = b.build(y).unwrap();
        assert!(!g.is_connected(lost));
        assert!(g.is_connected(t));
        let grads = g.input_gradients().unwrap();
        assert_eq!(grads[1], Array1::<f64>::zeros(2));
        assert_eq!(g.path_sum_bruteforce(lost, 10).unwrap(), Array1::<f64>::zeros(2));
    }

    #[test]
    fn unpopulated_partial_names_edge() {
        let g = example_function_graph();
        match g.reverse_mode_exact() {
            Err(Error::UnpopulatedPartial { src, dst }) => assert_eq!(dst, 6, "{src}"),
            other => panic!("expected error, got {other:?}"),
        }
    }

    #[test]
    fn path_cap_is_enforced() {
        let g = at(0.1, 0.2);
        match g.path_sum_bruteforce(0, 1) {
            Err(Error::TooManyPaths { count, cap }) => assert_eq!((count, cap), (2, 1)),
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn vector_vertices() {
        // y = sum(tanh(A x) * x)
        let mut b = GraphBuilder::new();
        let x = b.input(3);
        let a = array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6], [0.7, 0.0, 0.2]];
        let h = b.linear(3, &[(x, a)]).unwrap();
        let t = b.tanh(h).unwrap();
        let m = b.mul(t, x).unwrap();
        let y = b.sum(m).unwrap();
        let mut g = b.build(y).unwrap();
        let x0 = array![0.4, -1.1, 0.9];
        g.forward(&[x0.clone()]).unwrap();
        let grad = g.input_gradients().unwrap().remove(0);
        let brute = g.path_sum_bruteforce(x, DEFAULT_PATH_CAP).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut p = x0.clone();
            p[i] += h;
            let mut m = x0.clone();
            m[i] -= h;
            let fd = (g.evaluate(&[p]).unwrap() - g.evaluate(&[m]).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8);
            assert!((brute[i] - grad[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_scalar_output() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let y = b.exp(x).unwrap();
        assert!(matches!(b.build(y), Err(Error::InvalidGraph(_))));
    }
}
