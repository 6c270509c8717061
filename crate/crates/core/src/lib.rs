//! Negative binomial chain-ladder reserving.
//!
//! Incremental claim counts in a run-off triangle are modelled as
//! `N_{i,j} ~ NegBin(mu_{i,j}, kappa)` with `log mu_{i,j} = alpha_i + beta_j`.
//! The crate fits the model by IRLS, estimates `kappa` by profile likelihood
//! with a degrees-of-freedom correction, produces parametric-bootstrap
//! reserve distributions, and runs coverage studies against Poisson and
//! over-dispersed Poisson chain-ladder.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chainladder;
pub mod datasets;
pub mod diagnostics;
pub mod dispersion;
pub mod error;
pub mod glm;
pub mod predictive;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod triangle;

pub use error::{Error, Result};
