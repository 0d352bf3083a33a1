//! Sparse variational Gaussian-process inference built on the KL divergence
//! between the approximating and posterior processes.
//!
//! The crate is organised around a finite-dimensional oracle ([`oracle`])
//! in which every divergence is computed directly, and a production engine
//! ([`svgp`], [`interdomain`], [`cox`], [`optimize`]) whose objectives the
//! oracle certifies.

// Negated comparisons are how validation rejects NaN alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cox;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod interdomain;
pub mod optimize;
pub mod oracle;
pub mod quadrature;
pub mod svgp;

pub use error::{Error, Result};
