//! Gradient orthogonalisation for first-order optimisers.
//!
//! A layer's gradient tensor is reshaped into its component matrix (one
//! column per filter or output unit), projected onto the nearest
//! orthonormal matrix via SVD, and handed to a standard optimiser step
//! (SGD with momentum, Adam, or LARS). The crate also ships the
//! measurement instruments used to study the effect (pairwise
//! representation cosines, temporarily-dead-parameter counts, SVD overhead
//! timing) and a deterministic CNN training harness that runs the
//! comparison end to end on CIFAR-10 or synthetic data.

// Index loops in the numeric kernels cross-index several arrays; iterator
// rewrites obscure them.
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod diagnostics;
pub mod exp;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod parallel;
pub mod rng;
pub mod scalar;
