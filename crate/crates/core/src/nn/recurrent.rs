use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::arch::RecurrentSpec;
use super::ops;
use super::tape::{Precision, Storage, Tape, TapeRecord, TapeSampler};
use super::{Batch, Draw, Gradients, Param, Recorder, Strategy};
use crate::error::{Error, Result};

const W_IH: usize = 0;
const W_HH: usize = 1;
const B_IH: usize = 2;
const B_HH: usize = 3;
const W_OUT: usize = 4;
const B_OUT: usize = 5;

/// Record layer tags.
const LAYER_INPUT: usize = 0;
const LAYER_HIDDEN: usize = 1;
const LAYER_RELU: usize = 2;
const LAYER_OUTPUT: usize = 3;
const LAYER_SOFTMAX: usize = 4;

/// Standard deviation of the initial input and output weights.
pub const IRNN_INIT_STD: f64 = 0.001;

/// ReLU recurrent network classifying from the last hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentNet {
    spec: RecurrentSpec,
    params: Vec<Param>,
    pub(super) precision: Precision,
}

impl RecurrentNet {
    /// Identity recurrent weights, small normal input and output weights,
    /// zero biases.
    pub fn new<R: Rng + ?Sized>(spec: RecurrentSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let normal = Normal::new(0.0, IRNN_INIT_STD).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for b in [W_IH, W_OUT] {
            net.params[b].values.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        for i in 0..spec.hidden {
            net.params[W_HH].values[i * spec.hidden + i] = 1.0;
        }
        Ok(net)
    }

    pub fn zeros(spec: RecurrentSpec) -> Result<Self> {
        if spec.seq_len == 0 || spec.input_dim == 0 || spec.hidden == 0 || spec.classes == 0 {
            return Err(Error::InvalidParameter(format!("degenerate recurrent spec {spec:?}")));
        }
        let (i, h, c) = (spec.input_dim, spec.hidden, spec.classes);
        let params = vec![
            Param::zeros("rnn.w_ih".into(), h, i),
            Param::zeros("rnn.w_hh".into(), h, h),
            Param::zeros("rnn.b_ih".into(), 1, h),
            Param::zeros("rnn.b_hh".into(), 1, h),
            Param::zeros("out.weight".into(), c, h),
            Param::zeros("out.bias".into(), 1, c),
        ];
        Ok(Self { spec, params, precision: Precision::Single })
    }

    pub fn spec(&self) -> &RecurrentSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    fn affine(&self, x: ArrayView2<f64>, w: usize, b: usize) -> Array2<f64> {
        let mut y = x.dot(&self.params[w].matrix().t());
        for mut row in y.axis_iter_mut(Axis(0)) {
            row.iter_mut().zip(&self.params[b].values).for_each(|(v, bi)| *v += bi);
        }
        y
    }

    fn run(&self, inputs: ArrayView2<f64>, mut rec: Option<&mut Recorder<'_>>) -> Result<(Array2<f64>, Vec<TapeRecord>)> {
        let RecurrentSpec { seq_len, input_dim, hidden, .. } = self.spec;
        let rows = inputs.nrows();
        let mut h = Array2::zeros((rows, hidden));
        let mut records = Vec::new();
        let randomized = rec.as_ref().is_some_and(|r| r.strategy.kind.is_randomized());
        let resample = rec.as_ref().is_none_or(|r| r.strategy.resample_per_timestep);
        let mut fixed: Option<(Option<Draw>, Option<Draw>)> = None;
        for t in 0..seq_len {
            let x = inputs.slice(s![.., t * input_dim..(t + 1) * input_dim]);
            if let Some(r) = rec.as_deref_mut() {
                let draws = match &fixed {
                    Some(d) if !resample => d.clone(),
                    _ => (r.draw(rows, input_dim)?, r.draw(rows, hidden)?),
                };
                records.push(TapeRecord { layer: LAYER_INPUT, step: Some(t), storage: r.store(x, draws.0.as_ref())? });
                records.push(TapeRecord { layer: LAYER_HIDDEN, step: Some(t), storage: r.store(h.view(), draws.1.as_ref())? });
                fixed.get_or_insert(draws);
            }
            let mut a = self.affine(x, W_IH, B_IH);
            a += &self.affine(h.view(), W_HH, B_HH);
            if rec.is_some() {
                let storage = if randomized { Storage::relu_mask(a.view()) } else { Storage::ReluFromSuccessor };
                records.push(TapeRecord { layer: LAYER_RELU, step: Some(t), storage });
            }
            h = ops::relu(a.view());
        }
        let logits = self.affine(h.view(), W_OUT, B_OUT);
        if let Some(r) = rec {
            records.push(TapeRecord { layer: LAYER_OUTPUT, step: None, storage: r.input(h.view())? });
            records.push(TapeRecord { layer: LAYER_SOFTMAX, step: None, storage: Storage::dense(logits.view(), r.precision) });
        }
        Ok((logits, records))
    }

    pub fn forward(&self, batch: &Batch, strategy: &Strategy, sampler: &mut dyn TapeSampler) -> Result<(f64, Tape)> {
        batch.check(self.spec.seq_len * self.spec.input_dim, self.spec.classes)?;
        let mut rec = Recorder { strategy: *strategy, sampler, precision: self.precision };
        let (logits, records) = self.run(batch.inputs.view(), Some(&mut rec))?;
        let loss = ops::softmax_xent(logits.view(), &batch.labels);
        Ok((loss, Tape { records, labels: batch.labels.clone() }))
    }

    pub fn logits(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let len = self.spec.seq_len * self.spec.input_dim;
        if inputs.ncols() != len {
            return Err(Error::DimensionMismatch(format!("inputs have {} columns, network expects {len}", inputs.ncols())));
        }
        Ok(self.run(inputs, None)?.0)
    }

    pub fn backward(&self, tape: &Tape) -> Result<Gradients> {
        let t_len = self.spec.seq_len;
        if tape.records.len() != 3 * t_len + 2 {
            return Err(Error::TapeMismatch(format!(
                "tape has {} records, sequence length {t_len} needs {}",
                tape.records.len(),
                3 * t_len + 2
            )));
        }
        let expect = |i: usize, layer: usize, step: Option<usize>| -> Result<&Storage> {
            let r = tape.record(i)?;
            if r.layer != layer || r.step != step {
                return Err(Error::TapeMismatch(format!("record {i} is layer {} step {:?}", r.layer, r.step)));
            }
            Ok(&r.storage)
        };
        let out_rec = expect(3 * t_len, LAYER_OUTPUT, None)?;
        let logits = expect(3 * t_len + 1, LAYER_SOFTMAX, None)?.reconstruct()?;
        let delta = ops::softmax_xent_grad(logits.view(), &tape.labels);
        let mut grads = Gradients::zeros_like(&self.params);
        grads.set(W_OUT, delta.t().dot(&out_rec.reconstruct()?));
        grads.set(B_OUT, delta.sum_axis(Axis(0)));
        let mut dh = delta.dot(&self.params[W_OUT].matrix());
        let w_hh = self.params[W_HH].matrix();
        let mut g_ih = Array2::<f64>::zeros((self.spec.hidden, self.spec.input_dim));
        let mut g_hh = Array2::<f64>::zeros((self.spec.hidden, self.spec.hidden));
        let mut g_b = ndarray::Array1::<f64>::zeros(self.spec.hidden);
        for t in (0..t_len).rev() {
            let mask = match expect(3 * t + 2, LAYER_RELU, Some(t))? {
                Storage::ReluFromSuccessor if t + 1 < t_len => expect(3 * (t + 1) + 1, LAYER_HIDDEN, Some(t + 1))?.mask()?,
                Storage::ReluFromSuccessor => out_rec.mask()?,
                other => other.mask()?,
            };
            dh *= &mask;
            let x = expect(3 * t, LAYER_INPUT, Some(t))?.reconstruct()?;
            let h_prev = expect(3 * t + 1, LAYER_HIDDEN, Some(t))?.reconstruct()?;
            g_ih += &dh.t().dot(&x);
            g_hh += &dh.t().dot(&h_prev);
            g_b += &dh.sum_axis(Axis(0));
            if t > 0 {
                dh = dh.dot(&w_hh);
            }
        }
        grads.set(W_IH, g_ih);
        grads.set(W_HH, g_hh);
        grads.set(B_IH, g_b.iter().copied());
        grads.set(B_HH, g_b);
        Ok(grads)
    }
}
