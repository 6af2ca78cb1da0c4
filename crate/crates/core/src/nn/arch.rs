//! Architecture descriptions shared by the runtime networks and the memory
//! accountant.

use std::fmt;

use crate::error::{Error, Result};

/// Convolution kernel side length.
pub const KERNEL: usize = 5;
/// Zero padding on each side of a convolution input.
pub const PADDING: usize = 2;

/// Activation shape of one batch element. Flat vectors are `(d, 1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn image(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub const fn flat(d: usize) -> Self {
        Self { channels: d, height: 1, width: 1 }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn spatial(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.height == 1 && self.width == 1 {
            write!(f, "{}", self.channels)
        } else {
            write!(f, "{}x{}x{}", self.channels, self.height, self.width)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// Fully connected layer with bias; flattens its input.
    Linear { out: usize },
    /// 5×5 convolution with padding 2 and bias; preserves spatial size.
    Conv2d { out_channels: usize },
    Relu,
    AvgPool2x2,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::AvgPool2x2 => "avgpool2x2",
        }
    }

    /// Layers whose input is recorded for the weight gradient.
    pub fn stores_input(&self) -> bool {
        matches!(self, LayerSpec::Linear { .. } | LayerSpec::Conv2d { .. })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Linear { out } => write!(f, "linear:{out}"),
            LayerSpec::Conv2d { out_channels } => write!(f, "conv2d:{out_channels}"),
            l => f.write_str(l.name()),
        }
    }
}

/// Parses `linear:N`, `conv2d:N`, `relu`, `avgpool2x2`.
impl std::str::FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let (kind, size) = match t.split_once(':') {
            Some((k, n)) => (k, Some(n.trim().parse::<usize>().map_err(|_| Error::UnknownLayer(s.to_string()))?)),
            None => (t.as_str(), None),
        };
        match (kind, size) {
            ("linear", Some(out)) if out > 0 => Ok(LayerSpec::Linear { out }),
            ("conv2d", Some(out_channels)) if out_channels > 0 => Ok(LayerSpec::Conv2d { out_channels }),
            ("relu", None) => Ok(LayerSpec::Relu),
            ("avgpool2x2", None) => Ok(LayerSpec::AvgPool2x2),
            _ => Err(Error::UnknownLayer(s.to_string())),
        }
    }
}

/// Feed-forward stack ending in a softmax cross-entropy loss over the last
/// layer's outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedforwardSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl FeedforwardSpec {
    /// Input shape of every layer followed by the logits shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input];
        let mut cur = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                LayerSpec::Linear { out } => {
                    if out == 0 {
                        return Err(Error::InvalidParameter(format!("layer {i}: linear with 0 outputs")));
                    }
                    Shape::flat(out)
                }
                LayerSpec::Conv2d { out_channels } => {
                    if cur.height == 1 && cur.width == 1 {
                        return Err(Error::InvalidParameter(format!("layer {i}: conv2d on a flat input")));
                    }
                    Shape::image(out_channels, cur.height, cur.width)
                }
                LayerSpec::Relu => cur,
                LayerSpec::AvgPool2x2 => {
                    if cur.height % 2 != 0 || cur.width % 2 != 0 {
                        return Err(Error::InvalidParameter(format!(
                            "layer {i}: avgpool2x2 needs even spatial dims, got {cur}"
                        )));
                    }
                    Shape::image(cur.channels, cur.height / 2, cur.width / 2)
                }
            };
            shapes.push(cur);
        }
        match self.layers.last() {
            Some(LayerSpec::Linear { .. }) => Ok(shapes),
            _ => Err(Error::InvalidParameter("network must end with a linear layer".into())),
        }
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Linear { out }) => *out,
            _ => 0,
        }
    }

    pub fn parameter_count(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| match *l {
                LayerSpec::Linear { out } => out * s.len() + out,
                LayerSpec::Conv2d { out_channels } => out_channels * s.channels * KERNEL * KERNEL + out_channels,
                _ => 0,
            })
            .sum())
    }

    /// Whether the ReLU at `layer` can recover its derivative from the next
    /// layer's recorded input instead of storing a mask.
    pub fn relu_feeds_recorded_input(&self, layer: usize) -> bool {
        self.layers.get(layer + 1).is_some_and(LayerSpec::stores_input)
    }
}

/// Single ReLU recurrent cell `h_t = ReLU(W_ih x_t + b_ih + W_hh h_{t-1} + b_hh)`
/// followed by a linear softmax classifier on the last hidden state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecurrentSpec {
    pub seq_len: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl RecurrentSpec {
    pub fn parameter_count(&self) -> usize {
        let h = self.hidden;
        h * self.input_dim + h * h + 2 * h + self.classes * h + self.classes
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Architecture {
    Feedforward(FeedforwardSpec),
    Recurrent(RecurrentSpec),
}

impl Architecture {
    /// 784-300-300-300-10 ReLU MLP.
    pub fn mnist_mlp() -> Self {
        Architecture::Feedforward(FeedforwardSpec {
            input: Shape::flat(784),
            layers: vec![
                LayerSpec::Linear { out: 300 },
                LayerSpec::Relu,
                LayerSpec::Linear { out: 300 },
                LayerSpec::Relu,
                LayerSpec::Linear { out: 300 },
                LayerSpec::Relu,
                LayerSpec::Linear { out: 10 },
            ],
        })
    }

    /// Four 5×5 convolutions (16, 32, 32, 32 maps) on 3×32×32 inputs with two
    /// 2×2 average pools and a linear classifier. Pooling precedes the ReLU
    /// that follows it, so every ReLU output is exactly the next layer's
    /// recorded input.
    pub fn cifar_convnet() -> Self {
        Self::convnet(Shape::image(3, 32, 32), [16, 32, 32, 32], 10)
    }

    /// The convnet layout with configurable input and feature-map counts.
    pub fn convnet(input: Shape, maps: [usize; 4], classes: usize) -> Self {
        Architecture::Feedforward(FeedforwardSpec {
            input,
            layers: vec![
                LayerSpec::Conv2d { out_channels: maps[0] },
                LayerSpec::Relu,
                LayerSpec::Conv2d { out_channels: maps[1] },
                LayerSpec::AvgPool2x2,
                LayerSpec::Relu,
                LayerSpec::Conv2d { out_channels: maps[2] },
                LayerSpec::Relu,
                LayerSpec::Conv2d { out_channels: maps[3] },
                LayerSpec::AvgPool2x2,
                LayerSpec::Relu,
                LayerSpec::Linear { out: classes },
            ],
        })
    }

    /// MLP with the given hidden widths (ReLU between layers).
    pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::Linear { out: h });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Linear { out: classes });
        Architecture::Feedforward(FeedforwardSpec { input: Shape::flat(input), layers })
    }

    /// IRNN over 784 scalar pixels with 100 hidden units.
    pub fn sequential_mnist_irnn() -> Self {
        Architecture::Recurrent(RecurrentSpec { seq_len: 784, input_dim: 1, hidden: 100, classes: 10 })
    }

    pub fn parameter_count(&self) -> Result<usize> {
        match self {
            Architecture::Feedforward(s) => s.parameter_count(),
            Architecture::Recurrent(s) => Ok(s.parameter_count()),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Architecture::Feedforward(s) => s.classes(),
            Architecture::Recurrent(s) => s.classes,
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Architecture::Feedforward(s) => s.input.len(),
            Architecture::Recurrent(s) => s.seq_len * s.input_dim,
        }
    }
}
