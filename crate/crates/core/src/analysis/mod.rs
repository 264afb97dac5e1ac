//! Closed-form analysis of the dynamics and their discretisations.
//!
//! * [`theory`]: transformation constants, continuous-time rate bounds and
//!   the discretisation error/complexity formulas.
//! * [`affine`]: every kernel on a quadratic potential is an affine map plus
//!   Gaussian noise; this module builds that map and solves its stationary
//!   covariance.
//! * [`spectral`]: spectral radii and the 1D mean-process studies.
//! * [`propagation`]: exact Gaussian propagation of the continuous SDE on a
//!   quadratic potential.

pub mod affine;
pub mod propagation;
pub mod spectral;
pub mod theory;

use thiserror::Error;

pub use affine::{discrete_stationary_covariance, step_affine_map, AffineGaussianMap};
pub use propagation::{gaussian_continuous_propagation, gaussian_continuous_trajectory};
pub use spectral::{
    em_mean_map_1d, em_modulus_formula, hfhr_matched_modulus_parameters, spectral_radius,
    uld_optimal_discount, HfhrTuning, UldTuning,
};
pub use theory::{
    iteration_complexity, optimal_alpha, rate_bound_chi2_convex, rate_bound_chi2_poincare,
    rate_bound_w2, step_thresholds, theory_constants, w2_bound_discrete, Chi2ConvexBound,
    IterationComplexity, StepThresholds, TheoryConstants, W2RateBound,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{name} = {value} {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must be symmetric")]
    NotSymmetric,
    #[error("matrix must be symmetric positive definite")]
    NotSpd,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("spectral radius {radius} >= 1: no stationary distribution")]
    Unstable { radius: f64 },
    #[error(transparent)]
    Sampler(#[from] crate::samplers::SamplerError),
}

pub(crate) fn require(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), AnalysisError> {
    if cond {
        Ok(())
    } else {
        Err(AnalysisError::InvalidParameter { name, value, reason })
    }
}
