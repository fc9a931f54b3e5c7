//! Single-image super-resolution with adaptive densely connected residual
//! networks.
//!
//! The crate is self-contained: [`tensor`] provides a small rank-4 tensor type
//! with a reverse-mode autograd tape, [`model`] builds the network from it,
//! [`data`] handles PNG I/O and bicubic degradation, [`train`] runs L1
//! optimization with checkpointing, and [`metrics`] implements the usual
//! PSNR/SSIM evaluation, self-ensembling and spectrum analysis.

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, ParamStore, Real, Tensor, Var};
