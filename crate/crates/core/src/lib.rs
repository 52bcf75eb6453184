//! Benchmarking toolkit for aleatoric uncertainty predicted by deep ensembles
//! of mean-variance networks and by deep evidential regression.
//!
//! The crate is organised the way an experiment flows:
//!
//! - [`data`] generates the 0D line and 2D Sérsic-image datasets with
//!   Gaussian noise injected on the input or on the output variable.
//! - [`propagate`] turns input noise into the output uncertainty it implies,
//!   with a Monte-Carlo oracle alongside the analytic formulas.
//! - [`nn`] is a small reverse-mode network core (dense, conv, pooling) with Adam.
//! - [`losses`] holds β-NLL, the normal-inverse-gamma objective and the
//!   closed-form uncertainty expressions.
//! - [`train`] trains ensembles and evidential models and produces predictions.
//! - [`calib`] summarises predicted uncertainty against the injected truth.
//! - [`experiment`] runs, persists and renders complete experiments.

pub mod calib;
pub mod data;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod nn;
pub mod propagate;
pub mod rng;
pub mod special;
pub mod train;

pub use error::{Error, Result};
