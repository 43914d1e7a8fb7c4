//! Overlapping grouped lasso toolkit.
//!
//! Sparse linear regression with a penalty that selects unions of predefined,
//! possibly overlapping, predictor groups. The crate provides:
//!
//! - the overlap norm `‖β‖₂,₁,𝒢` with its norm-minimizing latent
//!   decomposition and structured-sparsity counts ([`norm`]);
//! - the estimator itself, fit by block coordinate descent on the duplicated
//!   design, with regularization paths, KKT diagnostics, and the adaptive
//!   (OLS-weighted) variant ([`solver`]);
//! - finite-sample constants, a sampled restricted-eigenvalue estimate, and
//!   Monte Carlo verification of the prediction/estimation bounds and the
//!   supporting tail inequalities ([`theory`]);
//! - support partitions, an assumption falsifier, and the large-sample
//!   distribution study for the adaptive variant ([`asymptotics`]);
//! - the two simulation studies comparing the estimator to the plain lasso
//!   ([`experiments`]);
//! - JSON/CSV interchange for all of the above ([`io`]).

pub mod asymptotics;
pub mod decomposition;
pub mod error;
pub mod experiments;
pub mod groups;
pub mod instance;
pub mod io;
pub mod norm;
pub mod rng;
pub mod solver;
pub mod theory;

pub use decomposition::Decomposition;
pub use error::{Error, Result};
pub use groups::GroupCollection;
pub use instance::{
    generate_instance, generate_instance_with, ols_fit, recovery_error, Normalization,
    ProblemInstance,
};
pub use norm::{
    check_direction_uniqueness, overlap_norm, overlap_norm_oracle, overlap_norm_with,
    structured_sparsity, NormOptions, NormResult, StructuredSparsity,
};
pub use solver::{
    adaptive_weights, duplicate_design, fit, fit_path, kkt_check, lambda_max, DuplicatedDesign,
    FitResult, KktReport, SolverConfig,
};
