//! Squeezed-light high-harmonic generation: quadrature sampling, stochastic
//! driving fields, a 1D split-operator TDSE, cutoff extraction and ensemble
//! statistics of the cutoff.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod ensemble;
pub mod error;
pub mod fieldgen;
pub mod quadrature;
pub mod spectral;
pub mod tdse;
pub mod units;

pub use error::{Error, Result};

// The guide's snippets run as doc-tests of this crate.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/quadrature.md")]
    mod quadrature {}
    #[doc = include_str!("../../../book/src/field.md")]
    mod field {}
    #[doc = include_str!("../../../book/src/tdse.md")]
    mod tdse {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/analytics.md")]
    mod analytics {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
}
