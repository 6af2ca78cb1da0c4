//! Backward-pass memory accounting.
//!
//! Layer inputs cost 32 bits per stored entry (`ceil(f·d)` entries when
//! sampled or projected). ReLU derivatives cost 1 bit per entry when they
//! cannot be recovered from a dense successor record. The softmax input is
//! always stored dense. Pooling layers and biases cost nothing.

use std::fmt;
use std::io::Write;
use std::iter::Sum;
use std::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::nn::{Architecture, FeedforwardSpec, LayerSpec, RecurrentSpec, Strategy, StrategyKind};

/// Bits per stored activation value.
pub const STORED_VALUE_BITS: u64 = 32;
/// Bits per stored parameter when parameters are included.
pub const PARAMETER_BITS: u64 = 32;

/// An exact bit count, reported in decimal bytes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ByteCount {
    bits: u64,
}

impl ByteCount {
    pub const ZERO: ByteCount = ByteCount { bits: 0 };

    pub const fn from_bits(bits: u64) -> Self {
        Self { bits }
    }

    pub const fn from_bytes(bytes: u64) -> Self {
        Self { bits: bytes * 8 }
    }

    pub const fn bits(&self) -> u64 {
        self.bits
    }

    pub fn bytes(&self) -> f64 {
        self.bits as f64 / 8.0
    }

    pub fn kilobytes(&self) -> f64 {
        self.bytes() / 1e3
    }

    pub fn megabytes(&self) -> f64 {
        self.bytes() / 1e6
    }
}

impl Add for ByteCount {
    type Output = ByteCount;
    fn add(self, rhs: ByteCount) -> ByteCount {
        ByteCount { bits: self.bits + rhs.bits }
    }
}

impl Mul<u64> for ByteCount {
    type Output = ByteCount;
    fn mul(self, rhs: u64) -> ByteCount {
        ByteCount { bits: self.bits * rhs }
    }
}

impl Sum for ByteCount {
    fn sum<I: Iterator<Item = ByteCount>>(iter: I) -> ByteCount {
        iter.fold(ByteCount::ZERO, Add::add)
    }
}

impl fmt::Display for ByteCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.bytes();
        if b >= 1e6 {
            write!(f, "{:.2} MB", b / 1e6)
        } else if b >= 1e3 {
            write!(f, "{} kB", b / 1e3)
        } else {
            write!(f, "{b} B")
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerMemory {
    pub name: String,
    pub per_element: ByteCount,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryReport {
    pub strategy: StrategyKind,
    pub fraction: f64,
    pub batch: usize,
    pub layers: Vec<LayerMemory>,
    pub per_element: ByteCount,
    /// Activation storage for the whole batch.
    pub activations: ByteCount,
    pub parameters: Option<ByteCount>,
    pub total: ByteCount,
}

impl MemoryReport {
    pub fn with_parameters(mut self, params: ByteCount) -> Self {
        self.parameters = Some(params);
        self.total = self.activations + params;
        self
    }
}

fn value_bits(strategy: &Strategy, d: usize) -> Result<u64> {
    Ok(STORED_VALUE_BITS * strategy.stored_dim(d)? as u64)
}

fn feedforward_layers(spec: &FeedforwardSpec, strategy: &Strategy) -> Result<Vec<LayerMemory>> {
    let shapes = spec.shapes()?;
    let dense = !strategy.kind.is_randomized();
    let mut out = Vec::with_capacity(spec.layers.len() + 1);
    for (i, (layer, shape)) in spec.layers.iter().zip(&shapes).enumerate() {
        let bits = match layer {
            LayerSpec::Linear { .. } | LayerSpec::Conv2d { .. } => value_bits(strategy, shape.len())?,
            LayerSpec::Relu if dense && spec.relu_feeds_recorded_input(i) => 0,
            LayerSpec::Relu => shape.len() as u64,
            LayerSpec::AvgPool2x2 => 0,
        };
        out.push(LayerMemory { name: format!("{}{i}", layer.name()), per_element: ByteCount::from_bits(bits) });
    }
    let classes = shapes.last().map_or(0, |s| s.len());
    out.push(LayerMemory {
        name: "softmax".into(),
        per_element: ByteCount::from_bits(STORED_VALUE_BITS * classes as u64),
    });
    Ok(out)
}

fn recurrent_layers(spec: &RecurrentSpec, strategy: &Strategy) -> Result<Vec<LayerMemory>> {
    let t = spec.seq_len as u64;
    let relu = if strategy.kind.is_randomized() { t * spec.hidden as u64 } else { 0 };
    Ok(vec![
        LayerMemory { name: "input".into(), per_element: ByteCount::from_bits(t * value_bits(strategy, spec.input_dim)?) },
        LayerMemory { name: "hidden".into(), per_element: ByteCount::from_bits(t * value_bits(strategy, spec.hidden)?) },
        LayerMemory { name: "relu".into(), per_element: ByteCount::from_bits(relu) },
        LayerMemory { name: "output".into(), per_element: ByteCount::from_bits(value_bits(strategy, spec.hidden)?) },
        LayerMemory {
            name: "softmax".into(),
            per_element: ByteCount::from_bits(STORED_VALUE_BITS * spec.classes as u64),
        },
    ])
}

/// Activation memory for one training step (parameters excluded).
pub fn estimate(arch: &Architecture, strategy: &Strategy, batch: usize) -> Result<MemoryReport> {
    if batch == 0 {
        return Err(Error::InvalidParameter("batch must be positive".into()));
    }
    let layers = match arch {
        Architecture::Feedforward(s) => feedforward_layers(s, strategy)?,
        Architecture::Recurrent(s) => recurrent_layers(s, strategy)?,
    };
    let per_element: ByteCount = layers.iter().map(|l| l.per_element).sum();
    let activations = per_element * batch as u64;
    Ok(MemoryReport {
        strategy: strategy.kind,
        fraction: if strategy.kind.is_randomized() { strategy.fraction } else { 1.0 },
        batch,
        layers,
        per_element,
        activations,
        parameters: None,
        total: activations,
    })
}

/// Parameter storage as counted in the training-memory table.
///
/// Feed-forward nets count every weight and bias. The recurrent row counts
/// the hidden-to-hidden matrix plus one input weight row per timestep
/// (`seq_len · hidden · input_dim + hidden²`), which is the convention under
/// which the table's recurrent totals are reproduced.
pub fn table_parameter_bytes(arch: &Architecture) -> Result<ByteCount> {
    let count = match arch {
        Architecture::Feedforward(s) => s.parameter_count()? as u64,
        Architecture::Recurrent(s) => (s.seq_len * s.hidden * s.input_dim + s.hidden * s.hidden) as u64,
    };
    Ok(ByteCount::from_bits(PARAMETER_BITS * count))
}

/// Fractions reported in the training-memory table (1.0 is the baseline).
pub const TABLE_FRACTIONS: [f64; 6] = [1.0, 0.8, 0.5, 0.3, 0.1, 0.05];

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub name: &'static str,
    pub fractions: Vec<f64>,
    pub megabytes: Vec<f64>,
}

/// Peak memory in MB (weights included) for the three reference nets at
/// the given fractions. Fraction 1.0 means the dense baseline.
pub fn table1(fractions: &[f64], batch: usize) -> Result<Vec<TableRow>> {
    let nets = [
        ("ConvNet", Architecture::cifar_convnet()),
        ("Fully Connected", Architecture::mnist_mlp()),
        ("RNN", Architecture::sequential_mnist_irnn()),
    ];
    nets.iter()
        .map(|(name, arch)| {
            let params = table_parameter_bytes(arch)?;
            let megabytes = fractions
                .iter()
                .map(|&f| {
                    let strategy = if f >= 1.0 {
                        Strategy::baseline()
                    } else {
                        Strategy::new(StrategyKind::DifferentSample, f)?
                    };
                    Ok(estimate(arch, &strategy, batch)?.with_parameters(params).total.megabytes())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TableRow { name, fractions: fractions.to_vec(), megabytes })
        })
        .collect()
}

/// Smallest dense batch whose activation memory is at least that of a
/// randomized strategy at `batch`: `ceil(batch · rad / dense)`.
pub fn matched_batch(arch: &Architecture, strategy: &Strategy, batch: usize) -> Result<usize> {
    let rad = estimate(arch, strategy, 1)?.per_element.bits() as u128;
    let dense = estimate(arch, &Strategy::baseline(), 1)?.per_element.bits() as u128;
    Ok(((batch as u128 * rad).div_ceil(dense) as usize).max(1))
}

/// Writes the table as CSV with one row per network.
pub fn write_table_csv<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["network".to_string()];
    if let Some(first) = rows.first() {
        header.extend(first.fractions.iter().map(|f| if *f >= 1.0 { "baseline".into() } else { f.to_string() }));
    }
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.name.to_string()];
        rec.extend(row.megabytes.iter().map(|m| format!("{m:.2}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
