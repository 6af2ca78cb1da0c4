use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::injection::reduced_dim;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// Dense 32-bit records; ReLU derivatives recovered from the next layer's input.
    Baseline,
    /// One index set per layer, shared by every batch element.
    SameSample,
    /// Independent index set per batch element.
    DifferentSample,
    /// One Rademacher projection per layer, shared by the batch.
    Project,
    /// Independent Rademacher projection per batch element.
    DifferentProject,
    /// Baseline storage; memory is matched by shrinking the batch instead.
    ReducedBatch,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Baseline,
        StrategyKind::SameSample,
        StrategyKind::DifferentSample,
        StrategyKind::Project,
        StrategyKind::DifferentProject,
        StrategyKind::ReducedBatch,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::SameSample => "same-sample",
            StrategyKind::DifferentSample => "different-sample",
            StrategyKind::Project => "project",
            StrategyKind::DifferentProject => "different-project",
            StrategyKind::ReducedBatch => "reduced-batch",
        }
    }

    /// Whether stored layer inputs are randomized.
    pub fn is_randomized(&self) -> bool {
        !matches!(self, StrategyKind::Baseline | StrategyKind::ReducedBatch)
    }

    pub fn is_projection(&self) -> bool {
        matches!(self, StrategyKind::Project | StrategyKind::DifferentProject)
    }

    /// One draw per batch element rather than one per layer.
    pub fn per_element(&self) -> bool {
        matches!(self, StrategyKind::DifferentSample | StrategyKind::DifferentProject)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Sampling fraction `f ∈ (0, 1]`; ignored by non-randomized kinds.
    pub fraction: f64,
    /// Recurrent nets: redraw indices at every timestep.
    pub resample_per_timestep: bool,
}

impl Strategy {
    pub fn new(kind: StrategyKind, fraction: f64) -> Result<Self> {
        reduced_dim(fraction, 1)?;
        Ok(Self { kind, fraction, resample_per_timestep: true })
    }

    pub fn baseline() -> Self {
        Self { kind: StrategyKind::Baseline, fraction: 1.0, resample_per_timestep: true }
    }

    pub fn with_timestep_resampling(mut self, on: bool) -> Self {
        self.resample_per_timestep = on;
        self
    }

    /// Stored width for a layer input of dimension `d`.
    pub fn stored_dim(&self, d: usize) -> Result<usize> {
        if self.kind.is_randomized() {
            reduced_dim(self.fraction, d)
        } else {
            Ok(d)
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind.is_randomized() {
            write!(f, "{}@{}", self.kind, self.fraction)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}
