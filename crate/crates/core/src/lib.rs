//! Numerical Karhunen-Loève expansion of lognormal random fields on `[0, 1]`.
//!
//! The pipeline samples the covariance kernel with a randomly shifted rank-1
//! lattice rule ([`lattice_qmc`]), assembles the sampled kernel against a
//! finite-element basis ([`fem1d`], [`covariance_op`]), solves the discrete
//! eigenproblem ([`spectral`]) and measures truncation errors
//! ([`error_lab`]) and their effect on an elliptic problem ([`pde_app`]).
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below fix the scalar.

// NaN-rejecting guards are written as `!(x > 0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance_op;
pub mod error_lab;
pub mod fem1d;
pub mod field_models;
pub mod io;
pub mod lattice_qmc;
pub mod linalg;
pub mod pde_app;
pub mod quadrature;
pub mod scalar;
pub mod spectral;

use thiserror::Error;

pub use covariance_op::{assemble_sample_matrix, eval_rn, kernel_trace_estimate, SampleMatrix};
pub use error_lab::{
    balance_parameters, constraint_check, decay_fit, rmse_l2, rmse_profile, rmse_profile_with, sup_error_rms, ErrorReport,
};
pub use fem1d::{build_space, FeSpace};
pub use field_models::{FieldModel, Smoothness};
pub use lattice_qmc::{
    cbc_construct, gaussian_map, inverse_normal_cdf, worst_case_error, GaussianSampleSet, LatticeRule,
    PointSet, WeightSchedule,
};
pub use pde_app::{perturbation_study, solve_elliptic, PdeProblem};
pub use scalar::Real;
pub use spectral::{diagnose_spectral_gap, solve_kl_eigen, solve_kl_eigen_up_to, DiscreteKl, KlRealization, PsiMode};

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lattice(#[from] lattice_qmc::LatticeError),
    #[error(transparent)]
    Field(#[from] field_models::FieldError),
    #[error(transparent)]
    Fem(#[from] fem1d::FemError),
    #[error(transparent)]
    Covariance(#[from] covariance_op::CovarianceError),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    ErrorLab(#[from] error_lab::ErrorLabError),
    #[error(transparent)]
    Pde(#[from] pde_app::PdeError),
}

pub type FeSpace64 = FeSpace<f64>;
pub type FeSpace32 = FeSpace<f32>;
pub type LatticeRule64 = LatticeRule<f64>;
pub type LatticeRule32 = LatticeRule<f32>;
pub type GaussianSampleSet64 = GaussianSampleSet<f64>;
pub type GaussianSampleSet32 = GaussianSampleSet<f32>;
pub type SampleMatrix64 = SampleMatrix<f64>;
pub type SampleMatrix32 = SampleMatrix<f32>;
pub type DiscreteKl64 = DiscreteKl<f64>;
pub type DiscreteKl32 = DiscreteKl<f32>;
pub type WeightSchedule64 = WeightSchedule<f64>;
pub type WeightSchedule32 = WeightSchedule<f32>;
