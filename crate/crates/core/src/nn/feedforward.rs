use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{FeedforwardSpec, LayerSpec, Shape, KERNEL};
use super::ops;
use super::tape::{Precision, Storage, Tape, TapeRecord, TapeSampler};
use super::{Batch, Gradients, Param, Recorder, Strategy};
use crate::error::{Error, Result};
use crate::injection::reduced_dim;

/// Linear/conv/ReLU/pool stack with a softmax cross-entropy head.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedforwardNet {
    spec: FeedforwardSpec,
    shapes: Vec<Shape>,
    params: Vec<Param>,
    /// Index of each layer's weight block (its bias follows it).
    weight_of: Vec<Option<usize>>,
    pub(super) precision: Precision,
}

impl FeedforwardNet {
    /// He-normal weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: FeedforwardSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for i in 0..net.spec.layers.len() {
            if let Some(w) = net.weight_of[i] {
                let fan_in = net.params[w].cols;
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                net.params[w].values.iter_mut().for_each(|v| *v = normal.sample(rng));
            }
        }
        Ok(net)
    }

    /// All-zero parameters with the layout of `spec`.
    pub fn zeros(spec: FeedforwardSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut params = Vec::new();
        let mut weight_of = Vec::with_capacity(spec.layers.len());
        for (i, (layer, s)) in spec.layers.iter().zip(&shapes).enumerate() {
            let (rows, cols) = match *layer {
                LayerSpec::Linear { out } => (out, s.len()),
                LayerSpec::Conv2d { out_channels } => (out_channels, s.channels * KERNEL * KERNEL),
                _ => {
                    weight_of.push(None);
                    continue;
                }
            };
            weight_of.push(Some(params.len()));
            let name = format!("{}{i}", layer.name());
            params.push(Param::zeros(format!("{name}.weight"), rows, cols));
            params.push(Param::zeros(format!("{name}.bias"), 1, rows));
        }
        Ok(Self { spec, shapes, params, weight_of, precision: Precision::Single })
    }

    pub fn spec(&self) -> &FeedforwardSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    fn weight(&self, layer: usize) -> (ArrayView2<'_, f64>, &[f64]) {
        let w = self.weight_of[layer].expect("parametrized layer");
        (self.params[w].matrix(), &self.params[w + 1].values)
    }

    fn run(&self, inputs: ArrayView2<f64>, mut rec: Option<&mut Recorder<'_>>) -> Result<(Array2<f64>, Vec<TapeRecord>)> {
        let mut x = inputs.to_owned();
        let mut records = Vec::new();
        let dense_relu = rec.as_ref().is_none_or(|r| !r.strategy.kind.is_randomized());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let s = self.shapes[i];
            let storage = match layer {
                LayerSpec::Linear { .. } | LayerSpec::Conv2d { .. } => match rec.as_deref_mut() {
                    Some(r) => r.input(x.view())?,
                    None => Storage::Empty,
                },
                LayerSpec::Relu if dense_relu && self.spec.relu_feeds_recorded_input(i) => Storage::ReluFromSuccessor,
                LayerSpec::Relu if rec.is_some() => Storage::relu_mask(x.view()),
                _ => Storage::Empty,
            };
            x = match layer {
                LayerSpec::Linear { .. } => {
                    let (w, b) = self.weight(i);
                    let mut y = x.dot(&w.t());
                    for mut row in y.axis_iter_mut(Axis(0)) {
                        row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
                    }
                    y
                }
                LayerSpec::Conv2d { .. } => {
                    let (w, b) = self.weight(i);
                    ops::conv_forward(x.view(), s, w, ndarray::ArrayView1::from(b))
                }
                LayerSpec::Relu => ops::relu(x.view()),
                LayerSpec::AvgPool2x2 => ops::avgpool_forward(x.view(), s),
            };
            if rec.is_some() {
                records.push(TapeRecord { layer: i, step: None, storage });
            }
        }
        if let Some(r) = rec {
            records.push(TapeRecord {
                layer: self.spec.layers.len(),
                step: None,
                storage: Storage::dense(x.view(), r.precision),
            });
        }
        Ok((x, records))
    }

    pub fn forward(&self, batch: &Batch, strategy: &Strategy, sampler: &mut dyn TapeSampler) -> Result<(f64, Tape)> {
        batch.check(self.spec.input.len(), self.spec.classes())?;
        let mut rec = Recorder { strategy: *strategy, sampler, precision: self.precision };
        let (logits, records) = self.run(batch.inputs.view(), Some(&mut rec))?;
        let loss = ops::softmax_xent(logits.view(), &batch.labels);
        Ok((loss, Tape { records, labels: batch.labels.clone() }))
    }

    pub fn logits(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.spec.input.len() {
            return Err(Error::DimensionMismatch(format!(
                "inputs have {} columns, network expects {}",
                inputs.ncols(),
                self.spec.input.len()
            )));
        }
        Ok(self.run(inputs, None)?.0)
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        let n = self.spec.layers.len();
        if tape.records.len() != n + 1 || tape.records.iter().enumerate().any(|(i, r)| r.layer != i || r.step.is_some()) {
            return Err(Error::TapeMismatch(format!(
                "tape has {} records, network has {} layers",
                tape.records.len(),
                n
            )));
        }
        Ok(())
    }

    pub fn backward(&self, tape: &Tape) -> Result<Gradients> {
        self.backward_with(tape, |_, _| Ok(None))
    }

    /// Backward pass where `inject(layer, delta)` may replace the adjoint
    /// handed to the layer below a linear layer.
    fn backward_with<F>(&self, tape: &Tape, mut inject: F) -> Result<Gradients>
    where
        F: FnMut(usize, &Array2<f64>) -> Result<Option<Array2<f64>>>,
    {
        self.check_tape(tape)?;
        let n = self.spec.layers.len();
        let logits = tape.record(n)?.storage.reconstruct()?;
        let mut delta = ops::softmax_xent_grad(logits.view(), &tape.labels);
        let mut grads = Gradients::zeros_like(&self.params);
        for i in (0..n).rev() {
            let s = self.shapes[i];
            let storage = &tape.record(i)?.storage;
            match self.spec.layers[i] {
                LayerSpec::Linear { .. } => {
                    let x = storage.reconstruct()?;
                    let (w, _) = self.weight(i);
                    let wi = self.weight_of[i].expect("linear weight");
                    grads.set(wi, delta.t().dot(&x));
                    grads.set(wi + 1, delta.sum_axis(Axis(0)));
                    if i > 0 {
                        let below = delta.dot(&w);
                        delta = inject(i, &below)?.unwrap_or(below);
                    }
                }
                LayerSpec::Conv2d { .. } => {
                    let x = storage.reconstruct()?;
                    let (w, _) = self.weight(i);
                    let wi = self.weight_of[i].expect("conv weight");
                    let g = ops::conv_backward(x.view(), s, w, delta.view(), i > 0);
                    grads.set(wi, g.weight);
                    grads.set(wi + 1, g.bias);
                    if let Some(d) = g.input {
                        delta = d;
                    }
                }
                LayerSpec::Relu => {
                    let mask = match storage {
                        Storage::ReluFromSuccessor => tape.record(i + 1)?.storage.mask()?,
                        other => other.mask()?,
                    };
                    if mask.dim() != delta.dim() {
                        return Err(Error::TapeMismatch(format!("ReLU record {i} has shape {:?}", mask.dim())));
                    }
                    delta *= &mask;
                }
                LayerSpec::AvgPool2x2 => delta = ops::avgpool_backward(delta.view(), s),
            }
        }
        Ok(grads)
    }

    /// Counter-example estimator that injects an independent basis sampling
    /// matrix into every Jacobian on the backward chain (layer inputs and
    /// every adjoint passed down through a linear layer), per batch element.
    /// Unbiased, but its variance compounds multiplicatively with depth.
    /// Needs a tape with dense layer inputs.
    pub fn backward_full_injection<R: Rng + ?Sized>(&self, tape: &Tape, fraction: f64, rng: &mut R) -> Result<Gradients> {
        let n = self.spec.layers.len();
        self.check_tape(tape)?;
        let mut sampled = tape.clone();
        for i in 0..n {
            if tape.records[i].storage == Storage::ReluFromSuccessor {
                let next = tape.record(i + 1)?.storage.reconstruct()?;
                sampled.records[i].storage = Storage::relu_mask(next.view());
            }
        }
        for i in 0..n {
            if !self.spec.layers[i].stores_input() {
                continue;
            }
            let x = tape.record(i)?.storage.reconstruct()?;
            sampled.records[i].storage = Storage::Dense {
                rows: x.nrows(),
                cols: x.ncols(),
                values: super::tape::Values::F64(basis_inject_rows(&x, fraction, rng)?.into_raw_vec_and_offset().0),
            };
        }
        self.backward_with(&sampled, |_, delta| Ok(Some(basis_inject_rows(delta, fraction, rng)?)))
    }
}

/// Applies an independent `P = (d/k) Σ e_i e_iᵀ` to every row.
fn basis_inject_rows<R: Rng + ?Sized>(x: &Array2<f64>, fraction: f64, rng: &mut R) -> Result<Array2<f64>> {
    let d = x.ncols();
    let k = reduced_dim(fraction, d)?;
    let scale = d as f64 / k as f64;
    let mut out = Array2::zeros(x.dim());
    for (src, mut dst) in x.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        for _ in 0..k {
            let i = rng.random_range(0..d);
            dst[i] += scale * src[i];
        }
    }
    Ok(out)
}
