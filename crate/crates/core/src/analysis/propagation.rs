//! Exact law of the continuous HFHR SDE on `f(q) = q^T H q / 2`.
//!
//! With `x = (q, p)` the SDE is linear: `dx = A x dt + sqrt(D) dW` with
//! `A = [[-alpha H, I], [-H, -gamma I]]` and `D = diag(2 alpha I, 2 gamma I)`.
//! A Gaussian initial law stays Gaussian; the mean is `e^{A t} m0` and the
//! covariance solves `S' = A S + S A^T + D`.

use nalgebra::{DMatrix, DVector};

use super::{require, AnalysisError};
use crate::gaussian::{sym, GaussianSummary};

/// Covariance ODE step is at most this over `max(1, |A|_F)`.
pub const LYAPUNOV_STEP_SCALE: f64 = 1e-3;

fn drift_and_diffusion(
    h_mat: &DMatrix<f64>,
    alpha: f64,
    gamma: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), AnalysisError> {
    let n = h_mat.nrows();
    if h_mat.ncols() != n {
        return Err(AnalysisError::NotSquare {
            rows: n,
            cols: h_mat.ncols(),
        });
    }
    if (h_mat - h_mat.transpose()).amax() > 1e-12 * h_mat.amax().max(1.0) {
        return Err(AnalysisError::NotSpd);
    }
    if h_mat.clone().cholesky().is_none() {
        return Err(AnalysisError::NotSpd);
    }
    require(alpha >= 0.0 && alpha.is_finite(), "alpha", alpha, "must be >= 0")?;
    require(gamma > 0.0 && gamma.is_finite(), "gamma", gamma, "must be > 0")?;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(h_mat * -alpha));
    a.view_mut((0, n), (n, n)).fill_with_identity();
    a.view_mut((n, 0), (n, n)).copy_from(&(-h_mat));
    a.view_mut((n, n), (n, n)).fill_diagonal(-gamma);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        d[(i, i)] = 2.0 * alpha;
        d[(n + i, n + i)] = 2.0 * gamma;
    }
    Ok((a, d))
}

/// Law at time `t` from `init`; see [`gaussian_continuous_trajectory`].
pub fn gaussian_continuous_propagation(
    h_mat: &DMatrix<f64>,
    alpha: f64,
    gamma: f64,
    mean0: &DVector<f64>,
    cov0: &DMatrix<f64>,
    t: f64,
) -> Result<GaussianSummary, AnalysisError> {
    let init = GaussianSummary {
        mean: mean0.clone(),
        cov: cov0.clone(),
    };
    Ok(gaussian_continuous_trajectory(h_mat, alpha, gamma, &init, &[t])?.remove(0))
}

/// Laws at each of `times` (non-decreasing, `>= 0`), integrating the
/// covariance ODE once along the whole grid with classical RK4.
pub fn gaussian_continuous_trajectory(
    h_mat: &DMatrix<f64>,
    alpha: f64,
    gamma: f64,
    init: &GaussianSummary,
    times: &[f64],
) -> Result<Vec<GaussianSummary>, AnalysisError> {
    let (a, d) = drift_and_diffusion(h_mat, alpha, gamma)?;
    let n2 = a.nrows();
    if init.mean.len() != n2 || init.cov.nrows() != n2 || init.cov.ncols() != n2 {
        return Err(AnalysisError::DimensionMismatch {
            expected: n2,
            found: init.mean.len(),
        });
    }
    let max_step = LYAPUNOV_STEP_SCALE / a.norm().max(1.0);
    let at = a.transpose();
    let rhs = |s: &DMatrix<f64>| &a * s + s * &at + &d;

    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    let mut cov = init.cov.clone();
    for &t in times {
        require(t >= 0.0 && t.is_finite(), "t", t, "must be >= 0")?;
        require(t >= now, "t", t, "times must be non-decreasing")?;
        let span = t - now;
        if span > 0.0 {
            let steps = (span / max_step).ceil() as usize;
            let dt = span / steps as f64;
            for _ in 0..steps {
                let k1 = rhs(&cov);
                let k2 = rhs(&(&cov + &k1 * (0.5 * dt)));
                let k3 = rhs(&(&cov + &k2 * (0.5 * dt)));
                let k4 = rhs(&(&cov + &k3 * dt));
                cov += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
            cov = sym(&cov);
        }
        now = t;
        let mean = (&a * t).exp() * &init.mean;
        out.push(GaussianSummary {
            mean,
            cov: cov.clone(),
        });
    }
    Ok(out)
}
