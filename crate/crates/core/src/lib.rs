//! Numerical laboratory for Sobolev-duality Wasserstein GANs.
//!
//! - [`tape`]: reverse-mode AD whose adjoints are themselves taped
//! - [`nets`]: MLP critic and generator
//! - [`toydata`]: toy samplers and the segment interpolation measure
//! - [`oracle`]: exact empirical W1, feasibility and duality checks
//! - [`constraints`]: critic regularizers (ALM, penalties, baselines)
//! - [`trainer`]: critic/generator loops with Adam
//! - [`diracsim`]: the Dirac-GAN dynamical system
//! - [`gradcheck`]: finite-difference verification suite
//! - [`cli`]: experiment harness behind the `swlab` binary

// `!(x > 0.0)` is the idiom for rejecting NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod constraints;
pub mod diracsim;
pub mod error;
pub mod gradcheck;
pub mod nets;
pub mod oracle;
pub mod rng;
pub mod tape;
pub mod toydata;
pub mod trainer;

pub use error::{Error, Result};
