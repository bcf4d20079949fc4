//! Layer-wise post-training quantization with quantization error propagation.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense matrices, norms, SPD solves, damped Hessians and
//!   orthogonal projections.
//! - [`quantizers`]: min-max integer grids, round-to-nearest and the
//!   Hessian-compensated sequential quantizer.
//! - [`qep`]: accumulated activation error, the closed-form corrected weight
//!   `W + a·W·δ·X̂ᵀ·Ĥ⁻¹`, its ridge-regularized counterpart and the
//!   propagation-strength/ridge spectral map.
//! - [`netmodel`]: synthetic networks, dual forward passes and the sequential
//!   quantization pipeline, plus the on-disk model format.
//! - [`diagnostics`]: error-growth series, residuals, Lipschitz and
//!   perturbation bounds, report serialization.

pub mod diagnostics;
mod error;
pub mod netmodel;
pub mod numerics;
pub mod par;
pub mod qep;
pub mod quantizers;

pub use error::{QepError, Result};
pub use numerics::{DampingMode, HessianMatrix, Matrix, ProjectionMatrix};
