//! Dense-matrix checks of the operator identities behind relaxed
//! backprojection: the two forms of the data-fidelity proximal map, the
//! matrix `R~` that turns the relaxed update into a resolvent, the domain
//! change `Phi_R`, and the equivalence and convergence statements built on
//! them.
//!
//! Here the data term is `f(x) = (sigma2 / 2) ||y - A x||^2` with `A` the
//! block sum, so `grad f(x) = W x - p` with `W = sigma2 A^T A`. Every
//! operator is affine and every resolvent a dense linear solve.

mod affine;
mod instance;
mod lemmas;
mod suite;
mod theorems;

use thiserror::Error;

use crate::linops::LinopsError;
use crate::mace::MaceError;

pub use affine::{min_symmetric_eigenvalue, resolvent, resolvent_of, spectral_norm, AffineMap, MonotoneOperatorSpec};
pub use instance::{
    random_instance, random_orthogonal, random_perturbation, random_spd, random_unit_direction, MatrixInstance,
    MAX_INSTANCE_DIM,
};
pub use lemmas::{
    build_phi_r, build_tilde_r, lipschitz_inverse_check, phi_r_slope, prox_two_forms, prox_two_forms_check,
    LipschitzInverseReport, PhiR, ProxForms, SlopeReport, TildeR, PSD_TOL,
};
pub use suite::{
    admissible_sigma2, lipschitz_check, phi_r_checks, prox_checks, random_monotone, random_theorem1_case,
    random_theorem2_case, random_theorem3_case, records_to_csv, rng_for, run_suite, theorem1_checks, theorem2_check,
    theorem3_check, tilde_r_checks, CheckRecord, SuiteConfig, INSTANCE_SHAPES,
};
pub use theorems::{
    solve_equilibrium, theorem3_config, verify_theorem1, verify_theorem2, verify_theorem3, DiagonalizableAffine,
    Quadratic, Theorem1Report, Theorem2Report, Theorem3Report,
};

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("{check}: hypothesis not met: {condition}")]
    Hypothesis { check: &'static str, condition: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} is singular")]
    Singular(&'static str),
    #[error(transparent)]
    Linops(#[from] LinopsError),
    #[error(transparent)]
    Mace(#[from] MaceError),
}

impl TheoryError {
    pub(crate) fn hypothesis(check: &'static str, condition: String) -> Self {
        Self::Hypothesis { check, condition }
    }
}
