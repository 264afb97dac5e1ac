//! Exact solution of the linear sub-flow
//!
//! ```text
//! dq = p dt
//! dp = -gamma p dt + sqrt(2 gamma) dB
//! ```
//!
//! over a duration `t`. Each coordinate evolves independently; the noise is
//! a 2-vector `(X, Y)` per coordinate with the covariance returned by
//! [`phi_covariance`].

use nalgebra::Matrix2;

use super::{ChainState, NoiseSource, SamplerError};

/// Below this value of `gamma * t` the closed forms are replaced by Taylor
/// series; they lose every significant digit to cancellation otherwise.
pub const TAYLOR_THRESHOLD: f64 = 1e-6;

/// Upper limit on `gamma * t` accepted by the kernel.
pub const MAX_GAMMA_T: f64 = 700.0;

fn check_args(gamma: f64, t: f64) -> Result<(), SamplerError> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(SamplerError::InvalidParameter {
            name: "gamma",
            value: gamma,
            reason: "must be > 0",
        });
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(SamplerError::InvalidParameter {
            name: "t",
            value: t,
            reason: "must be > 0",
        });
    }
    if gamma * t >= MAX_GAMMA_T {
        return Err(SamplerError::InvalidParameter {
            name: "gamma*t",
            value: gamma * t,
            reason: "must be < 700",
        });
    }
    Ok(())
}

/// Covariance of `(X, Y)` for one coordinate after duration `t`:
///
/// ```text
/// v_qq = (2 gamma t + 4 e^{-gamma t} - e^{-2 gamma t} - 3) / gamma^2
/// v_qp = (1 - e^{-gamma t})^2 / gamma
/// v_pp = 1 - e^{-2 gamma t}
/// ```
pub fn phi_covariance(gamma: f64, t: f64) -> Result<Matrix2<f64>, SamplerError> {
    check_args(gamma, t)?;
    let x = gamma * t;
    let (vqq, vqp, vpp) = if x < TAYLOR_THRESHOLD {
        let (x2, x3) = (x * x, x * x * x);
        let x4 = x2 * x2;
        let vpp = 2.0 * x - 2.0 * x2 + (4.0 / 3.0) * x3 - (2.0 / 3.0) * x4;
        let vqp = (x2 - x3 + (7.0 / 12.0) * x4 - 0.25 * x4 * x) / gamma;
        let vqq = ((2.0 / 3.0) * x3 - 0.5 * x4 + (7.0 / 30.0) * x4 * x - x3 * x3 / 12.0)
            / (gamma * gamma);
        (vqq, vqp, vpp)
    } else {
        let om1 = -(-x).exp_m1();
        let om2 = -(-2.0 * x).exp_m1();
        (qq_numerator(x) / (gamma * gamma), om1 * om1 / gamma, om2)
    };
    Ok(Matrix2::new(vqq, vqp, vqp, vpp))
}

/// `2x + 4e^{-x} - e^{-2x} - 3`. The closed form cancels down to `O(x^3)`,
/// so below `x = 1` the power series `sum_k (-1)^k (4 - 2^k) x^k / k!` is
/// summed instead.
fn qq_numerator(x: f64) -> f64 {
    if x >= 1.0 {
        return 2.0 * x + 4.0 * (-x).exp() - (-2.0 * x).exp() - 3.0;
    }
    let mut sum = 0.0;
    // x^k / k! and 2^k, starting at k = 3
    let mut pow = x * x * x / 6.0;
    let mut two_k = 8.0;
    let mut sign = -1.0;
    for k in 3..60 {
        let term = sign * (4.0 - two_k) * pow;
        sum += term;
        if term.abs() <= f64::EPSILON * 1e-3 * sum.abs() {
            break;
        }
        pow *= x / (k + 1) as f64;
        two_k *= 2.0;
        sign = -sign;
    }
    sum
}

/// Precomputed exact kernel of the linear sub-flow for fixed `(gamma, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiFlowKernel {
    gamma: f64,
    t: f64,
    /// `(1 - e^{-gamma t}) / gamma`
    position_gain: f64,
    /// `e^{-gamma t}`
    momentum_decay: f64,
    cov: Matrix2<f64>,
    /// Lower Cholesky factor `[[l11, 0], [l21, l22]]` of `cov`.
    chol: Matrix2<f64>,
}

impl PhiFlowKernel {
    pub fn new(gamma: f64, t: f64) -> Result<Self, SamplerError> {
        let cov = phi_covariance(gamma, t)?;
        let l11 = cov[(0, 0)].max(0.0).sqrt();
        let l21 = if l11 > 0.0 { cov[(0, 1)] / l11 } else { 0.0 };
        let l22 = (cov[(1, 1)] - l21 * l21).max(0.0).sqrt();
        Ok(Self {
            gamma,
            t,
            position_gain: -(-gamma * t).exp_m1() / gamma,
            momentum_decay: (-gamma * t).exp(),
            cov,
            chol: Matrix2::new(l11, 0.0, l21, l22),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn duration(&self) -> f64 {
        self.t
    }

    pub fn position_gain(&self) -> f64 {
        self.position_gain
    }

    pub fn momentum_decay(&self) -> f64 {
        self.momentum_decay
    }

    pub fn covariance(&self) -> &Matrix2<f64> {
        &self.cov
    }

    pub fn cholesky_factor(&self) -> &Matrix2<f64> {
        &self.chol
    }

    /// Applies the flow with pre-drawn normals; `xi` holds `(xi_q, xi_p)`
    /// interleaved per coordinate and has length `2d`.
    pub(crate) fn apply_with(&self, state: &mut ChainState, xi: &[f64]) {
        debug_assert_eq!(xi.len(), 2 * state.dim());
        let (l11, l21, l22) = (self.chol[(0, 0)], self.chol[(1, 0)], self.chol[(1, 1)]);
        for (i, (q, p)) in state.q.iter_mut().zip(state.p.iter_mut()).enumerate() {
            let (a, b) = (xi[2 * i], xi[2 * i + 1]);
            *q += self.position_gain * *p + l11 * a;
            *p = self.momentum_decay * *p + l21 * a + l22 * b;
        }
    }
}

/// Runs the linear sub-flow for the kernel's duration, drawing `2d` fresh
/// normals from `noise`.
pub fn phi_half_step<N: NoiseSource + ?Sized>(
    state: &mut ChainState,
    kernel: &PhiFlowKernel,
    noise: &mut N,
) {
    let mut xi = vec![0.0; 2 * state.dim()];
    noise.fill_standard_normal(&mut xi);
    kernel.apply_with(state, &xi);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::ZeroNoise;

    #[test]
    fn reference_values() {
        let c = phi_covariance(2.0, 0.5).unwrap();
        assert!((c[(1, 1)] - (1.0 - (-2f64).exp())).abs() < 1e-15);
        assert!((c[(1, 1)] - 0.864665).abs() < 1e-6);
        assert!((c[(0, 1)] - 0.199788).abs() < 1e-6);
        assert_eq!(c[(0, 1)], c[(1, 0)]);
    }

    #[test]
    fn short_time_limit() {
        for &t in &[1e-3, 1e-5, 1e-7, 1e-9, 1e-12] {
            let c = phi_covariance(1.0, t).unwrap();
            assert!((c[(1, 1)] / (2.0 * t) - 1.0).abs() < 2.0 * t + 1e-12);
            assert!((c[(0, 0)] / (2.0 / 3.0 * t * t * t) - 1.0).abs() < 1e-2);
            assert!(c[(0, 1)] > 0.0);
        }
    }

    #[test]
    fn taylor_branch_is_continuous() {
        for &gamma in &[0.5, 1.0, 3.0] {
            let t_lo = TAYLOR_THRESHOLD * (1.0 - 1e-9) / gamma;
            let t_hi = TAYLOR_THRESHOLD * (1.0 + 1e-9) / gamma;
            let a = phi_covariance(gamma, t_lo).unwrap();
            let b = phi_covariance(gamma, t_hi).unwrap();
            // the pp and qp entries are well conditioned on both sides
            assert!((a[(1, 1)] / b[(1, 1)] - 1.0).abs() < 1e-6);
            assert!((a[(0, 1)] / b[(0, 1)] - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn qq_series_matches_closed_form() {
        for &x in &[0.3f64, 0.7, 0.999, 1.0, 1.5] {
            let closed = 2.0 * x + 4.0 * (-x).exp() - (-2.0 * x).exp() - 3.0;
            assert!((qq_numerator(x) / closed - 1.0).abs() < 1e-13, "x={x}");
        }
        // leading behaviour 2x^3/3 - x^4/2
        let x = 1e-4;
        let lead = 2.0 / 3.0 * x * x * x - 0.5 * x * x * x * x;
        assert!((qq_numerator(x) / lead - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(phi_covariance(0.0, 1.0).is_err());
        assert!(phi_covariance(1.0, 0.0).is_err());
        assert!(phi_covariance(-1.0, 1.0).is_err());
        assert!(phi_covariance(1.0, 700.0).is_err());
        assert!(PhiFlowKernel::new(1.0, -1.0).is_err());
    }

    #[test]
    fn cholesky_reproduces_covariance() {
        for &gamma in &[0.1, 1.0, 10.0, 100.0] {
            for &t in &[1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
                let k = PhiFlowKernel::new(gamma, t).unwrap();
                let m = k.cholesky_factor();
                let diff = m * m.transpose() - k.covariance();
                assert!(diff.amax() <= 1e-12, "gamma={gamma} t={t}: {}", diff.amax());
                let eig = k.covariance().symmetric_eigenvalues();
                assert!(eig.min() >= 0.0);
            }
        }
    }

    #[test]
    fn drift_values() {
        let k = PhiFlowKernel::new(2.0, 0.5).unwrap();
        let mut s = ChainState::new(vec![1.0], vec![1.0]).unwrap();
        phi_half_step(&mut s, &k, &mut ZeroNoise);
        assert!((s.q[0] - (1.0 + (1.0 - (-1f64).exp()) / 2.0)).abs() < 1e-15);
        assert!((s.q[0] - 1.316060).abs() < 1e-6);
        assert!((s.p[0] - (-1f64).exp()).abs() < 1e-15);

        let mut z = ChainState::zeros(3);
        phi_half_step(&mut z, &k, &mut ZeroNoise);
        assert_eq!(z, ChainState::zeros(3));
    }
}
