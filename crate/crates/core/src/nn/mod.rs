//! Small networks with a randomized backward tape.
//!
//! The forward pass is always the exact network. Only the records kept for
//! the backward pass change with the [`Strategy`]: inputs of linear and
//! convolution layers (the factors of each weight gradient) are stored
//! dense, sampled, or projected, and ReLU derivatives are kept as 1-bit
//! masks whenever they cannot be read back from a dense successor record.
//! Every parameter-to-loss path therefore crosses exactly one randomized
//! factor, so the estimate is unbiased and variance does not compound with
//! depth.

mod arch;
pub mod checkpoint;
mod feedforward;
pub mod noise;
pub mod ops;
mod recurrent;
mod strategy;
pub mod tape;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

pub use arch::{Architecture, FeedforwardSpec, LayerSpec, RecurrentSpec, Shape, KERNEL, PADDING};
pub use feedforward::FeedforwardNet;
pub use recurrent::RecurrentNet;
pub use strategy::{Strategy, StrategyKind};
pub use tape::{IndexSource, Precision, RngSampler, ScriptedSampler, SignSource, Storage, Tape, TapeRecord, TapeSampler};

use crate::error::{Error, Result};
use crate::optim::ParamSlot;

/// Inputs (`batch × input_len`) and integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows, {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, input_len: usize, classes: usize) -> Result<()> {
        if self.inputs.ncols() != input_len {
            return Err(Error::DimensionMismatch(format!(
                "batch rows have {} values, network expects {input_len}",
                self.inputs.ncols()
            )));
        }
        if self.inputs.nrows() != self.labels.len() {
            return Err(Error::DimensionMismatch("inputs and labels differ in length".into()));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidParameter(format!("label {y} outside {classes} classes")));
        }
        Ok(())
    }
}

/// A named, row-major parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Param {
    fn zeros(name: String, rows: usize, cols: usize) -> Self {
        Self { name, rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &self.values).expect("param shape")
    }
}

/// Gradient blocks aligned with a model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub names: Vec<String>,
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &[Param]) -> Self {
        Self {
            names: params.iter().map(|p| p.name.clone()).collect(),
            blocks: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Gradients) {
        for (x, y) in self.blocks.iter_mut().zip(&other.blocks) {
            x.iter_mut().zip(y).for_each(|(xi, yi)| *xi += a * yi);
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.blocks.iter_mut().flatten().for_each(|x| *x *= a);
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    /// Block indices grouped by layer prefix (text before the first `.`).
    pub fn layer_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, n) in self.names.iter().enumerate() {
            let layer = n.split('.').next().unwrap_or(n).to_string();
            match groups.last_mut() {
                Some((l, v)) if *l == layer => v.push(i),
                _ => groups.push((layer, vec![i])),
            }
        }
        groups
    }

    fn set(&mut self, block: usize, values: impl IntoIterator<Item = f64>) {
        for (dst, v) in self.blocks[block].iter_mut().zip(values) {
            *dst = v;
        }
    }
}

/// Randomness drawn for one stored input.
#[derive(Clone, Debug)]
enum Draw {
    Index(IndexSource),
    Sign(SignSource),
}

/// Turns layer inputs into records according to a strategy.
struct Recorder<'a> {
    strategy: Strategy,
    sampler: &'a mut dyn TapeSampler,
    precision: Precision,
}

impl Recorder<'_> {
    fn draw(&mut self, rows: usize, d: usize) -> Result<Option<Draw>> {
        let kind = self.strategy.kind;
        if !kind.is_randomized() {
            return Ok(None);
        }
        let k = self.strategy.stored_dim(d)?;
        Ok(Some(if kind.is_projection() {
            Draw::Sign(self.sampler.signs(rows, d, k, kind.per_element()))
        } else {
            Draw::Index(self.sampler.indices(rows, d, k, kind.per_element()))
        }))
    }

    fn store(&self, x: ArrayView2<f64>, draw: Option<&Draw>) -> Result<Storage> {
        let k = self.strategy.stored_dim(x.ncols())?;
        Ok(match draw {
            None => Storage::dense(x, self.precision),
            Some(Draw::Index(src)) => Storage::sampled(x, k, src.clone(), self.precision)?,
            Some(Draw::Sign(src)) => Storage::projected(x, k, src.clone(), self.precision)?,
        })
    }

    fn input(&mut self, x: ArrayView2<f64>) -> Result<Storage> {
        let draw = self.draw(x.nrows(), x.ncols())?;
        self.store(x, draw.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Feedforward(FeedforwardNet),
    Recurrent(RecurrentNet),
}

impl Model {
    /// Randomly initialized model for `arch`.
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        Ok(match arch {
            Architecture::Feedforward(s) => Model::Feedforward(FeedforwardNet::new(s.clone(), rng)?),
            Architecture::Recurrent(s) => Model::Recurrent(RecurrentNet::new(*s, rng)?),
        })
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Model::Feedforward(n) => Architecture::Feedforward(n.spec().clone()),
            Model::Recurrent(n) => Architecture::Recurrent(*n.spec()),
        }
    }

    pub fn params(&self) -> &[Param] {
        match self {
            Model::Feedforward(n) => n.params(),
            Model::Recurrent(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        match self {
            Model::Feedforward(n) => n.params_mut(),
            Model::Recurrent(n) => n.params_mut(),
        }
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        self.params_mut().iter_mut().map(|p| ParamSlot { name: &p.name, values: &mut p.values }).collect()
    }

    pub fn precision(&self) -> Precision {
        match self {
            Model::Feedforward(n) => n.precision,
            Model::Recurrent(n) => n.precision,
        }
    }

    /// Precision of stored activation values (single by default).
    pub fn set_precision(&mut self, p: Precision) {
        match self {
            Model::Feedforward(n) => n.precision = p,
            Model::Recurrent(n) => n.precision = p,
        }
    }

    pub fn forward(&self, batch: &Batch, strategy: &Strategy, sampler: &mut dyn TapeSampler) -> Result<(f64, Tape)> {
        match self {
            Model::Feedforward(n) => n.forward(batch, strategy, sampler),
            Model::Recurrent(n) => n.forward(batch, strategy, sampler),
        }
    }

    pub fn forward_rng<R: Rng + ?Sized>(&self, batch: &Batch, strategy: &Strategy, rng: &mut R) -> Result<(f64, Tape)> {
        self.forward(batch, strategy, &mut RngSampler(rng))
    }

    pub fn backward(&self, tape: &Tape) -> Result<Gradients> {
        match self {
            Model::Feedforward(n) => n.backward(tape),
            Model::Recurrent(n) => n.backward(tape),
        }
    }

    /// Loss and gradient estimate for one batch.
    pub fn gradient<R: Rng + ?Sized>(&self, batch: &Batch, strategy: &Strategy, rng: &mut R) -> Result<(f64, Gradients)> {
        let (loss, tape) = self.forward_rng(batch, strategy, rng)?;
        Ok((loss, self.backward(&tape)?))
    }

    pub fn logits(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Model::Feedforward(n) => n.logits(inputs),
            Model::Recurrent(n) => n.logits(inputs),
        }
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        batch.check(self.architecture().input_len(), self.architecture().classes())?;
        Ok(ops::softmax_xent(self.logits(batch.inputs.view())?.view(), &batch.labels))
    }

    /// Loss and fraction of correct predictions.
    pub fn evaluate(&self, batch: &Batch) -> Result<(f64, f64)> {
        batch.check(self.architecture().input_len(), self.architecture().classes())?;
        let z = self.logits(batch.inputs.view())?;
        let loss = ops::softmax_xent(z.view(), &batch.labels);
        let correct = z
            .outer_iter()
            .zip(&batch.labels)
            .filter(|(row, &y)| ops::argmax(*row) == y)
            .count();
        Ok((loss, correct as f64 / batch.len() as f64))
    }
}

/// Exact gradient of the mean loss over `data`, accumulated in chunks.
pub fn full_gradient(model: &Model, data: &Batch, chunk: usize) -> Result<Gradients> {
    let n = data.len();
    let mut total = Gradients::zeros_like(model.params());
    let mut start = 0;
    while start < n {
        let end = (start + chunk.max(1)).min(n);
        let part = Batch::new(
            data.inputs.slice(ndarray::s![start..end, ..]).to_owned(),
            data.labels[start..end].to_vec(),
        )?;
        let (_, tape) = model.forward(&part, &Strategy::baseline(), &mut ScriptedSampler::default())?;
        total.axpy((end - start) as f64 / n as f64, &model.backward(&tape)?);
        start = end;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory;
    use crate::rng;

    fn tiny_batch(arch: &Architecture, n: usize, seed: u64) -> Batch {
        let mut r = rng::seeded(seed);
        let inputs = Array2::from_shape_simple_fn((n, arch.input_len()), || r.random_range(-1.0..1.0));
        let labels = (0..n).map(|_| r.random_range(0..arch.classes())).collect();
        Batch::new(inputs, labels).unwrap()
    }

    fn archs() -> Vec<Architecture> {
        vec![
            Architecture::mlp(5, &[4, 3], 3),
            Architecture::convnet(Shape::image(2, 4, 4), [3, 2, 2, 2], 3),
            Architecture::Recurrent(RecurrentSpec { seq_len: 4, input_dim: 2, hidden: 3, classes: 2 }),
        ]
    }

    #[test]
    fn baseline_matches_finite_differences() {
        for arch in archs() {
            let mut model = Model::new(&arch, &mut rng::seeded(3)).unwrap();
            // Zero biases put pre-activations of all-dead rows exactly on the
            // ReLU kink; shift everything off it.
            for p in model.params_mut() {
                p.values.iter_mut().enumerate().for_each(|(i, v)| *v += 0.3 * ((i as f64) * 1.7 + 0.4).sin());
            }
            model.set_precision(Precision::Double);
            let batch = tiny_batch(&arch, 3, 9);
            let (_, g) = model.gradient(&batch, &Strategy::baseline(), &mut rng::seeded(0)).unwrap();
            let h = 1e-5;
            for b in 0..model.params().len() {
                for j in 0..model.params()[b].values.len() {
                    let mut m = model.clone();
                    m.params_mut()[b].values[j] += h;
                    let up = m.loss(&batch).unwrap();
                    m.params_mut()[b].values[j] -= 2.0 * h;
                    let down = m.loss(&batch).unwrap();
                    let fd = (up - down) / (2.0 * h);
                    let an = g.blocks[b][j];
                    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{arch:?} block {b}[{j}]: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn forward_invariance_and_accounting() {
        for arch in archs() {
            let model = Model::new(&arch, &mut rng::seeded(4)).unwrap();
            let batch = tiny_batch(&arch, 5, 1);
            let (base, _) = model.forward_rng(&batch, &Strategy::baseline(), &mut rng::seeded(0)).unwrap();
            for kind in StrategyKind::ALL {
                for f in [0.1, 0.5, 1.0] {
                    let s = Strategy::new(kind, f).unwrap();
                    let (loss, tape) = model.forward_rng(&batch, &s, &mut rng::seeded(7)).unwrap();
                    assert_eq!(loss.to_bits(), base.to_bits());
                    let est = memory::estimate(&arch, &s, batch.len()).unwrap();
                    assert_eq!(tape.byte_size(), est.activations, "{arch:?} {s}");
                    model.backward(&tape).unwrap();
                }
            }
        }
    }

    #[test]
    fn zero_inputs_give_zero_first_layer_weight_gradient() {
        let arch = Architecture::mlp(4, &[3], 2);
        let model = Model::new(&arch, &mut rng::seeded(2)).unwrap();
        let batch = Batch::new(Array2::zeros((3, 4)), vec![0, 1, 1]).unwrap();
        for kind in StrategyKind::ALL {
            let s = Strategy::new(kind, 0.5).unwrap();
            let (_, g) = model.gradient(&batch, &s, &mut rng::seeded(1)).unwrap();
            assert!(g.blocks[0].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn relu_mask_equals_recomputed_derivative() {
        let arch = Architecture::mlp(6, &[5, 5], 3);
        let model = Model::new(&arch, &mut rng::seeded(8)).unwrap();
        let batch = tiny_batch(&arch, 4, 2);
        let (_, tape) = model.forward_rng(&batch, &Strategy::baseline(), &mut rng::seeded(0)).unwrap();
        let mut masked = tape.clone();
        for i in 0..masked.records.len() {
            if masked.records[i].storage == Storage::ReluFromSuccessor {
                let next = tape.records[i + 1].storage.reconstruct().unwrap();
                masked.records[i].storage = Storage::relu_mask(next.view());
            }
        }
        assert_eq!(model.backward(&masked).unwrap(), model.backward(&tape).unwrap());
    }

    #[test]
    fn tape_mismatch_detected() {
        let a = Model::new(&Architecture::mlp(4, &[3], 2), &mut rng::seeded(1)).unwrap();
        let b = Model::new(&Architecture::mlp(4, &[3, 3], 2), &mut rng::seeded(1)).unwrap();
        let batch = tiny_batch(&a.architecture(), 2, 3);
        let (_, tape) = a.forward_rng(&batch, &Strategy::baseline(), &mut rng::seeded(0)).unwrap();
        assert!(matches!(b.backward(&tape), Err(Error::TapeMismatch(_))));
    }

    #[test]
    fn minibatch_is_path_sampling() {
        let arch = Architecture::mlp(3, &[2], 2);
        let model = Model::new(&arch, &mut rng::seeded(6)).unwrap();
        let data = tiny_batch(&arch, 5, 4);
        for idx in [vec![0, 1, 2, 3, 4], vec![3], vec![1, 4], vec![2, 2]] {
            let rep = noise::mini_batch_as_path_sampling_check(&model, &data, &idx).unwrap();
            assert!(rep.max_rel_diff < 1e-12, "{idx:?}: {}", rep.max_rel_diff);
        }
    }
}
