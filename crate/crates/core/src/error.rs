use std::io;

use thiserror::Error;

use crate::graph::VertexId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cycle detected: edge {from} -> {to} closes a cycle")]
    Cycle { from: VertexId, to: VertexId },

    #[error("edge {src} -> {dst} has no local partial (run forward first)")]
    UnpopulatedPartial { src: VertexId, dst: VertexId },

    #[error("vertex {0} has no value (run forward first)")]
    UnpopulatedValue(VertexId),

    #[error("path count {count} exceeds cap {cap}")]
    TooManyPaths { count: u128, cap: u128 },

    #[error("sampling outcome space exceeds cap {cap}")]
    TooManyOutcomes { cap: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("stability ratio D*dt/dx^2 = {ratio} exceeds 1/4")]
    Unstable { ratio: f64 },

    #[error("non-finite field value at timestep {step}")]
    NonFiniteField { step: usize },

    #[error("tape does not match model: {0}")]
    TapeMismatch(String),

    #[error("bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { found: u32, expected: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown layer kind `{0}`")]
    UnknownLayer(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
