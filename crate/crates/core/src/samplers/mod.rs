//! One-step transition kernels and chain simulation.
//!
//! Four kernels are provided, all using exactly one gradient evaluation per
//! step:
//!
//! * `hfhr_strang`: `phi^{h/2} o psi~^h o phi^{h/2}` where `phi` is the exactly
//!   solved damped-momentum flow and `psi~` an Euler–Maruyama step of the
//!   gradient/position-noise flow. Normals are consumed as `xi1` (2d), `eta`
//!   (d), `xi2` (2d).
//! * `uld_klmc`: first-order kinetic Langevin Monte Carlo, i.e. underdamped
//!   Langevin with the gradient frozen at the start of the step and the rest
//!   integrated exactly.
//! * `ula`: overdamped Langevin, Euler–Maruyama. The momentum slot is set to
//!   zero.
//! * `hfhr_em`: Euler–Maruyama on the full HFHR SDE.

mod kernels;
mod phi;
mod rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernels::{
    em_hfhr_step, hfhr_step, psi_tilde_step, simulate_chain, ula_step, uld_step, Kernel, Workspace,
};
pub(crate) use kernels::frozen_position_coeff;
pub use phi::{phi_covariance, phi_half_step, PhiFlowKernel, MAX_GAMMA_T, TAYLOR_THRESHOLD};
pub use rng::{NoiseSource, RandomSource, ZeroNoise};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("{name} = {value} {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("kernel mismatch: expected {expected:?}, config has {found:?}")]
    WrongKind {
        expected: SamplerKind,
        found: SamplerKind,
    },
    #[error("state dimension {state} does not match potential dimension {model}")]
    DimensionMismatch { state: usize, model: usize },
    #[error("chain diverged at step {step}: non-finite state")]
    Diverged { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    HfhrStrang,
    UldKlmc,
    Ula,
    HfhrEm,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [
        SamplerKind::HfhrStrang,
        SamplerKind::UldKlmc,
        SamplerKind::Ula,
        SamplerKind::HfhrEm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::HfhrStrang => "hfhr_strang",
            SamplerKind::UldKlmc => "uld_klmc",
            SamplerKind::Ula => "ula",
            SamplerKind::HfhrEm => "hfhr_em",
        }
    }

    /// Standard normals consumed per step per coordinate.
    pub fn normals_per_coordinate(self) -> usize {
        match self {
            SamplerKind::HfhrStrang => 5,
            SamplerKind::UldKlmc => 2,
            SamplerKind::Ula => 1,
            SamplerKind::HfhrEm => 2,
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Position/momentum pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl ChainState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self, SamplerError> {
        if q.len() != p.len() {
            return Err(SamplerError::DimensionMismatch {
                state: q.len(),
                model: p.len(),
            });
        }
        Ok(Self { q, p })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            q: vec![0.0; dim],
            p: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }

    /// Euclidean norm of the stacked vector `(q, p)`.
    pub fn norm(&self) -> f64 {
        self.q.iter().chain(&self.p).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Dynamics parameters. `ula` ignores `alpha` and `gamma`; `uld_klmc`
/// ignores `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub step: f64,
}

fn default_gamma() -> f64 {
    2.0
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind, alpha: f64, gamma: f64, step: f64) -> Self {
        Self {
            kind,
            alpha,
            gamma,
            step,
        }
    }

    pub fn hfhr(alpha: f64, gamma: f64, step: f64) -> Self {
        Self::new(SamplerKind::HfhrStrang, alpha, gamma, step)
    }

    pub fn uld(gamma: f64, step: f64) -> Self {
        Self::new(SamplerKind::UldKlmc, 0.0, gamma, step)
    }

    pub fn ula(step: f64) -> Self {
        Self::new(SamplerKind::Ula, 0.0, 1.0, step)
    }

    pub fn hfhr_em(alpha: f64, gamma: f64, step: f64) -> Self {
        Self::new(SamplerKind::HfhrEm, alpha, gamma, step)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(SamplerError::InvalidParameter {
                name: "step",
                value: self.step,
                reason: "must be > 0",
            });
        }
        if self.kind != SamplerKind::Ula && (!(self.gamma > 0.0) || !self.gamma.is_finite()) {
            return Err(SamplerError::InvalidParameter {
                name: "gamma",
                value: self.gamma,
                reason: "must be > 0",
            });
        }
        if matches!(self.kind, SamplerKind::HfhrStrang | SamplerKind::HfhrEm)
            && (!(self.alpha >= 0.0) || !self.alpha.is_finite())
        {
            return Err(SamplerError::InvalidParameter {
                name: "alpha",
                value: self.alpha,
                reason: "must be >= 0",
            });
        }
        Ok(())
    }
}
