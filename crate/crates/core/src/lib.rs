//! Randomized reverse-mode automatic differentiation.
//!
//! Reverse-mode AD needs the whole linearized computational graph (or the
//! intermediates required to rebuild it) on the backward pass. This crate
//! replaces that graph with a sparse random one whose backward pass is an
//! *unbiased* estimate of the true gradient, trading gradient variance for
//! memory.
//!
//! * [`graph`]: linearized computational graphs, exact reverse mode, and the
//!   brute-force path-sum oracle.
//! * [`path_sampler`]: per-vertex outgoing-edge sampling with `d_v / k`
//!   scaling, followed by backpropagation over the sparse edge weights.
//! * [`injection`]: random matrices `P = R Rᵀ` with `E[P] = I` applied to
//!   intermediate Jacobians (basis sampling and Rademacher projection).
//! * [`nn`]: small networks whose backward tape stores sampled or projected
//!   activations and 1-bit ReLU masks.
//! * [`pde`]: a reaction-diffusion control problem with an exact and a
//!   randomized gradient.
//! * [`memory`]: byte accounting for tapes and reference architectures.
//! * [`optim`]: SGD and Adam with step-decay schedules.
//! * [`harness`]: datasets, experiment configs, and CSV emission.

pub mod error;
pub mod graph;
pub mod harness;
pub mod injection;
pub mod memory;
pub mod nn;
pub mod optim;
pub mod path_sampler;
pub mod pde;
pub mod rng;

pub use error::{Error, Result};
