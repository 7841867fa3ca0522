//! Kernels for saliency-guided state-space models.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`nn`]: dense tensors, saliency maps and the small set of
//!   neural primitives everything else composes.
//! - [`ssm`]: zero-order-hold discretization, sequential and parallel
//!   evaluation of the diagonal linear recurrence, selective projections and
//!   the analytic backward pass.
//! - [`scan_order`]: 2D to 1D patch orders, including the row-adaptive
//!   neighbour scan driven by a binary saliency mask.
//! - [`ss2d`], [`cau`], [`fusion`], [`sir`]: the blocks built on top of the
//!   scan kernels.
//! - [`eval`]: saliency metrics and training losses.
//! - [`macl`]: the three-stage rehearsal schedule and mask-constrained
//!   randomized quantization.
//! - [`io`]: PGM maps and the `SMBT` tensor container.

pub mod cau;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod macl;
pub mod nn;
pub mod scan_order;
pub mod sir;
pub mod ss2d;
pub mod ssm;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Dtype, Real, SaliencyMap, ScanPath, Tensor};
