//! Bidirectionally self-normalizing neural networks.
//!
//! The crate is organised around the pieces needed to build and study deep
//! networks whose forward activations and backward error signals both keep
//! their norms across depth:
//!
//! - [`quadrature`]: Gauss-Hermite rules for expectations under `N(0, 1)`.
//! - [`activations`]: the built-in activations and user-defined ones.
//! - [`gpn`]: Gaussian-Poincaré normalization constants and diagnostics.
//! - [`ortho`]: Haar-orthogonal sampling and the row-normalized relaxation.
//! - [`network`]: forward/backward propagation with norm telemetry.
//! - [`experiments`]: drivers for the synthetic and training experiments.
//! - [`data`]: MNIST / CIFAR-10 loaders and thin-shell input normalization.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod data;
mod error;
pub mod experiments;
pub mod gpn;
pub mod network;
pub mod ortho;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use activations::Activation;
pub use error::{Error, Result};
pub use gpn::{GpnConstants, MomentReport, RootSelection};
pub use network::{Network, NetworkConfig, WeightMode};
pub use quadrature::QuadratureRule;
pub use rng::SeedStream;
