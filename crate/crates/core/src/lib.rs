//! Class-pose decomposition for equivariant representation learning.
//!
//! The latent space is a product of a spherical class component and a Lie
//! group acting on itself by left multiplication. Everything in this crate is
//! pure computation over `alloc` collections: file formats, configuration and
//! the command-line driver live in the `classpose` companion crate.
//!
//! Module map:
//!
//! - [`liegroup`]: closed-form arithmetic on products of ℝⁿ, SO(2) and SO(3).
//! - [`latent`]: the class × pose latent space and its action.
//! - [`autodiff`]: a reverse-mode tape, MLP encoders and the Adam updater.
//! - [`losses`]: equivariance, InfoNCE and hinge objectives.
//! - [`datasets`]: synthetic generators emitting `(x, g, y)` triples.
//! - [`baselines`]: the MDPH and Linear comparison models.
//! - [`model`] / [`train`]: the main model and a generic training loop.
//! - [`eval`]: hit-rate, orbit separation, disentanglement and mapping.
//! - [`oracle`]: brute-force checks of the free-action decomposition on finite groups.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod baselines;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod latent;
pub mod liegroup;
pub mod losses;
pub mod model;
pub mod oracle;
pub mod train;

pub use error::{Error, Result};
pub use latent::{LatentPoint, LatentSpaceSpec};
pub use liegroup::{AlgebraVector, Factor, FactorKind, GroupElement, GroupSpec};
