//! Spatially structured Bayesian regression with dual spike-and-slab
//! selection of fixed effects and covariate-specific CAR random effects.
//!
//! The pipeline has two stages. [`hsm`] fits a hierarchical Strauss point
//! process on each sub-region of a biopsy to obtain a local tumour–immune
//! interaction estimate. [`gibbs`] then regresses those sub-region outcomes
//! on biopsy-level covariates, selecting both fixed effects and the
//! variances of covariate-specific CAR random effects. [`sim`] holds the
//! simulator, comparators and selection metrics used for benchmarking.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod gibbs;
pub mod hsm;
pub mod io;
pub mod samplers;
pub mod seeds;
pub mod sim;
pub mod spatial;

pub use error::{Error, Result};
