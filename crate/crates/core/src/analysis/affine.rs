//! Exact affine-Gaussian form of one kernel step on `f(q) = q^T H q / 2`.
//!
//! The state is stacked as `x = (q_1..q_n, p_1..p_n)`. One step maps
//! `x -> T x + c + N(0, Q)`.

use nalgebra::{DMatrix, DVector};

use super::spectral::spectral_radius;
use super::{AnalysisError};
use crate::gaussian::{sym, GaussianSummary};
use crate::samplers::{frozen_position_coeff, phi_covariance, SamplerConfig, SamplerKind};

/// Relative tolerance of the stationary covariance solve.
pub const STATIONARY_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineGaussianMap {
    pub t: DMatrix<f64>,
    pub c: DVector<f64>,
    pub q: DMatrix<f64>,
}

impl AffineGaussianMap {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &AffineGaussianMap) -> AffineGaussianMap {
        let t2 = &next.t;
        AffineGaussianMap {
            t: t2 * &self.t,
            c: t2 * &self.c + &next.c,
            q: sym(&(t2 * &self.q * t2.transpose() + &next.q)),
        }
    }

    /// Push a Gaussian law through one step.
    pub fn apply(&self, law: &GaussianSummary) -> GaussianSummary {
        GaussianSummary {
            mean: &self.t * &law.mean + &self.c,
            cov: sym(&(&self.t * &law.cov * self.t.transpose() + &self.q)),
        }
    }

    /// Law after `k` steps, by repeated application.
    pub fn apply_n(&self, law: &GaussianSummary, k: usize) -> GaussianSummary {
        let mut out = law.clone();
        for _ in 0..k {
            out = self.apply(&out);
        }
        out
    }

    fn from_blocks(
        n: usize,
        tqq: DMatrix<f64>,
        tqp: DMatrix<f64>,
        tpq: DMatrix<f64>,
        tpp: DMatrix<f64>,
        cov: [f64; 3],
    ) -> AffineGaussianMap {
        let mut t = DMatrix::zeros(2 * n, 2 * n);
        t.view_mut((0, 0), (n, n)).copy_from(&tqq);
        t.view_mut((0, n), (n, n)).copy_from(&tqp);
        t.view_mut((n, 0), (n, n)).copy_from(&tpq);
        t.view_mut((n, n), (n, n)).copy_from(&tpp);
        let [vqq, vqp, vpp] = cov;
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            q[(i, i)] = vqq;
            q[(i, n + i)] = vqp;
            q[(n + i, i)] = vqp;
            q[(n + i, n + i)] = vpp;
        }
        AffineGaussianMap {
            t,
            c: DVector::zeros(2 * n),
            q,
        }
    }
}

fn phi_map(n: usize, gamma: f64, t: f64) -> Result<AffineGaussianMap, AnalysisError> {
    let cov = phi_covariance(gamma, t)?;
    let gain = -(-gamma * t).exp_m1() / gamma;
    let decay = (-gamma * t).exp();
    let id = DMatrix::identity(n, n);
    Ok(AffineGaussianMap::from_blocks(
        n,
        id.clone(),
        &id * gain,
        DMatrix::zeros(n, n),
        &id * decay,
        [cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]],
    ))
}

/// Affine-Gaussian representation of one step of `kind` on the centred
/// quadratic with Hessian `h_mat`. `gamma` is ignored for `ula` and `alpha`
/// for `ula` and `uld_klmc`.
pub fn step_affine_map(
    kind: SamplerKind,
    h_mat: &DMatrix<f64>,
    alpha: f64,
    gamma: f64,
    h: f64,
) -> Result<AffineGaussianMap, AnalysisError> {
    let n = h_mat.nrows();
    if h_mat.ncols() != n {
        return Err(AnalysisError::NotSquare {
            rows: n,
            cols: h_mat.ncols(),
        });
    }
    if (h_mat - h_mat.transpose()).amax() > 1e-12 * h_mat.amax().max(1.0) {
        return Err(AnalysisError::NotSymmetric);
    }
    SamplerConfig::new(kind, alpha, gamma, h).validate()?;
    let id = DMatrix::<f64>::identity(n, n);
    let zero = DMatrix::<f64>::zeros(n, n);
    let map = match kind {
        SamplerKind::HfhrStrang => {
            let half = phi_map(n, gamma, 0.5 * h)?;
            let psi = AffineGaussianMap::from_blocks(
                n,
                &id - h_mat * (alpha * h),
                zero.clone(),
                h_mat * (-h),
                id.clone(),
                [2.0 * alpha * h, 0.0, 0.0],
            );
            half.then(&psi).then(&half)
        }
        SamplerKind::UldKlmc => {
            let cov = phi_covariance(gamma, h)?;
            let gain = -(-gamma * h).exp_m1() / gamma;
            let decay = (-gamma * h).exp();
            let fq = frozen_position_coeff(gamma, h);
            AffineGaussianMap::from_blocks(
                n,
                &id - h_mat * fq,
                &id * gain,
                h_mat * (-gain),
                &id * decay,
                [cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]],
            )
        }
        SamplerKind::Ula => AffineGaussianMap::from_blocks(
            n,
            &id - h_mat * h,
            zero.clone(),
            zero.clone(),
            zero,
            [2.0 * h, 0.0, 0.0],
        ),
        SamplerKind::HfhrEm => AffineGaussianMap::from_blocks(
            n,
            &id - h_mat * (alpha * h),
            &id * h,
            h_mat * (-h),
            &id * (1.0 - gamma * h),
            [2.0 * alpha * h, 0.0, 2.0 * gamma * h],
        ),
    };
    Ok(map)
}

/// Stationary law of `x -> T x + c + N(0, Q)`: the solution of
/// `S = T S T^T + Q` and mean `(I - T)^{-1} c`.
///
/// The fixed-point iteration is run in doubled form
/// (`S <- S + A S A^T`, `A <- A^2`), which after `j` rounds equals `2^j`
/// plain iterations.
pub fn discrete_stationary_covariance(map: &AffineGaussianMap) -> Result<GaussianSummary, AnalysisError> {
    let n = map.dim();
    if map.t.nrows() != n || map.t.ncols() != n || map.q.nrows() != n || map.q.ncols() != n {
        return Err(AnalysisError::DimensionMismatch {
            expected: n,
            found: map.t.nrows(),
        });
    }
    let radius = spectral_radius(&map.t)?;
    if radius >= 1.0 {
        return Err(AnalysisError::Unstable { radius });
    }
    let mut sigma = map.q.clone();
    let mut a = map.t.clone();
    for _ in 0..64 {
        let inc = &a * &sigma * a.transpose();
        sigma += &inc;
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        if inc.amax() <= STATIONARY_TOL * scale || a.amax() == 0.0 {
            break;
        }
        a = &a * &a;
    }
    let mean = if map.c.iter().all(|&v| v == 0.0) {
        DVector::zeros(n)
    } else {
        let lhs = DMatrix::identity(n, n) - &map.t;
        lhs.lu().solve(&map.c).ok_or(AnalysisError::Unstable { radius })?
    };
    Ok(GaussianSummary {
        mean,
        cov: sym(&sigma),
    })
}
