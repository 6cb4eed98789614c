//! Maximum penalized likelihood estimation and fixed-effect selection in
//! linear mixed-effects models with SCAD, L1, hard-thresholding, L2 and
//! bridge penalties.
//!
//! The main entry points are [`solver::cgd_fit`] for a single penalty level,
//! [`selection::fit_path`] for a BIC-selected regularization path and
//! [`simulation::run_scenario`] for replicated simulation studies.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod inference;
pub mod model;
pub mod penalty;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
pub use model::{GroupBlock, MixedModelData, ModelParameters, VarianceSpec, VarianceStructure};
pub use penalty::{PenaltyFamily, PenaltySpec};
pub use solver::{FitResult, SolverConfig};
