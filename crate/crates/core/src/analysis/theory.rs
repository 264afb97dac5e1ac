//! Constants of the linear change of variables that makes the dynamics
//! contractive, and the convergence bounds built from them.
//!
//! With `P = [[gamma I, I], [0, sqrt(1 + alpha gamma) I]]`, the singular
//! values of `P` give the condition number `kappa'`, and `lambda'` is the
//! contraction rate of the transformed process.

use super::{require, AnalysisError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    /// Lipschitz constant of the full drift `(q, p) -> (p - alpha grad f, -gamma p - grad f)`.
    pub l_prime: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// `sigma_max / sigma_min`.
    pub kappa_prime: f64,
    /// `min{m/gamma + alpha m, (gamma^2 - L)/gamma}`; may be `<= 0`.
    pub lambda_prime: f64,
    /// `gamma^2 > L`, i.e. `lambda' > 0` whenever `m > 0`.
    pub contraction_available: bool,
}

pub fn theory_constants(l: f64, m: f64, alpha: f64, gamma: f64) -> Result<TheoryConstants, AnalysisError> {
    require(m >= 0.0 && m.is_finite(), "m", m, "must be >= 0")?;
    require(l >= m && l.is_finite(), "L", l, "must be finite and >= m")?;
    require(gamma > 0.0 && gamma.is_finite(), "gamma", gamma, "must be > 0")?;
    require(alpha >= 0.0 && alpha.is_finite(), "alpha", alpha, "must be >= 0")?;

    let l_prime = 2f64.sqrt()
        * ((1.0 + alpha * alpha).sqrt() * l.max(1.0 / 2f64.sqrt())).max((1.0 + gamma * gamma).sqrt());

    let ag = alpha * gamma;
    let g2 = gamma * gamma;
    let disc = (ag * ag - 2.0 * ag * g2 + 4.0 * ag + g2 * g2 + 4.0).max(0.0);
    let s2_max = ag / 2.0 + g2 / 2.0 + disc.sqrt() / 2.0 + 1.0;
    // product of the squared singular values is det(P)^2 = gamma^2 (1 + alpha gamma)
    let s2_min = g2 * (1.0 + ag) / s2_max;
    let sigma_max = s2_max.sqrt();
    let sigma_min = s2_min.sqrt();

    let lambda_prime = (m / gamma + alpha * m).min((g2 - l) / gamma);
    Ok(TheoryConstants {
        l_prime,
        sigma_max,
        sigma_min,
        kappa_prime: sigma_max / sigma_min,
        lambda_prime,
        contraction_available: g2 > l,
    })
}

/// Chi-square decay rate `2 min{lambda_pi, 1} min{alpha, gamma}` under a
/// Poincaré inequality.
pub fn rate_bound_chi2_poincare(alpha: f64, gamma: f64, lambda_pi: f64) -> Result<f64, AnalysisError> {
    require(alpha > 0.0, "alpha", alpha, "must be > 0")?;
    require(gamma > 0.0, "gamma", gamma, "must be > 0")?;
    require(lambda_pi > 0.0, "lambda_pi", lambda_pi, "must be > 0")?;
    Ok(2.0 * lambda_pi.min(1.0) * alpha.min(gamma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2ConvexBound {
    pub rate: f64,
    /// `gamma^2 >= max{2 lambda, L}`
    pub gamma_condition: bool,
    /// `alpha <= gamma/lambda - 2/gamma`
    pub alpha_condition: bool,
}

/// Chi-square decay rate `sqrt(lambda)/(2 gamma) + sqrt(lambda) alpha / 16`
/// for convex potentials. The side conditions are reported, not enforced.
pub fn rate_bound_chi2_convex(alpha: f64, gamma: f64, lambda: f64, l: f64) -> Chi2ConvexBound {
    let s = lambda.max(0.0).sqrt();
    let alpha_limit = if lambda > 0.0 { gamma / lambda - 2.0 / gamma } else { f64::INFINITY };
    Chi2ConvexBound {
        rate: s / (2.0 * gamma) + s * alpha / 16.0,
        gamma_condition: gamma * gamma >= (2.0 * lambda).max(l),
        alpha_condition: alpha <= alpha_limit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2RateBound {
    /// `m/gamma + m alpha`
    pub rate: f64,
    /// `kappa'`
    pub prefactor: f64,
    /// `gamma^2 > L + m`
    pub gamma_condition: bool,
    /// `alpha <= (gamma^2 - L - m) / (m gamma)`
    pub alpha_condition: bool,
}

impl W2RateBound {
    pub fn assumptions_hold(&self) -> bool {
        self.gamma_condition && self.alpha_condition
    }

    /// `kappa' e^{-rate t} w2_init`.
    pub fn bound_at(&self, t: f64, w2_init: f64) -> f64 {
        self.prefactor * (-self.rate * t).exp() * w2_init
    }
}

/// Exponential W2 contraction of the continuous dynamics for an
/// `m`-strongly convex, `L`-smooth potential.
pub fn rate_bound_w2(alpha: f64, gamma: f64, m: f64, l: f64) -> Result<W2RateBound, AnalysisError> {
    let tc = theory_constants(l, m, alpha, gamma)?;
    let slack = gamma * gamma - l - m;
    let alpha_condition = if m > 0.0 {
        alpha <= slack / (m * gamma)
    } else {
        slack > 0.0
    };
    Ok(W2RateBound {
        rate: m / gamma + m * alpha,
        prefactor: tc.kappa_prime,
        gamma_condition: slack > 0.0,
        alpha_condition,
    })
}

/// W2 bound after `k` steps of the Strang scheme:
/// `sqrt(2) kappa' e^{-(m/gamma + m alpha) k h} w2_init + sqrt(2) C h`.
#[allow(clippy::too_many_arguments)]
pub fn w2_bound_discrete(
    alpha: f64,
    gamma: f64,
    m: f64,
    l: f64,
    h: f64,
    k: u64,
    w2_init: f64,
    c: f64,
) -> Result<f64, AnalysisError> {
    require(h >= 0.0, "h", h, "must be >= 0")?;
    let b = rate_bound_w2(alpha, gamma, m, l)?;
    let decay = (-b.rate * k as f64 * h).exp();
    Ok(2f64.sqrt() * (b.prefactor * decay * w2_init + c * h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationComplexity {
    pub h_star: f64,
    /// Real-valued step count, clamped at 0; callers take the ceiling.
    pub k_star: f64,
}

/// Step size and iteration count sufficient for W2 accuracy `eps`.
#[allow(clippy::too_many_arguments)]
pub fn iteration_complexity(
    alpha: f64,
    gamma: f64,
    m: f64,
    c: f64,
    h0: f64,
    eps: f64,
    kappa_prime: f64,
    w2_init: f64,
) -> Result<IterationComplexity, AnalysisError> {
    require(eps > 0.0, "eps", eps, "must be > 0")?;
    require(h0 > 0.0, "h0", h0, "must be > 0")?;
    require(c > 0.0, "C", c, "must be > 0")?;
    require(gamma > 0.0, "gamma", gamma, "must be > 0")?;
    let rate = m / gamma + m * alpha;
    require(rate > 0.0, "m/gamma + m alpha", rate, "must be > 0")?;
    let k = 2.0 * 2f64.sqrt();
    let h_star = h0.min(eps / (k * c));
    let log_term = (k * kappa_prime * w2_init / eps).ln();
    let k_star = ((1.0 / h0).max(k * c / eps) * log_term / rate).max(0.0);
    Ok(IterationComplexity { h_star, k_star })
}

/// Upper bound `(b1 alpha^3 + b2) / (m/gamma + m alpha)` on the
/// discretisation constant.
pub fn discretization_constant_bound(b1: f64, b2: f64, m: f64, gamma: f64, alpha: f64) -> f64 {
    (b1 * alpha.powi(3) + b2) / (m / gamma + m * alpha)
}

/// Minimiser over `alpha >= 0` of `(b1 alpha^3 + b2) / (m/gamma + m alpha)^2`.
///
/// The stationarity condition reduces to `b1 a^3 + 3 (b1/gamma) a^2 - 2 b2 = 0`,
/// which is increasing on `a > 0` and has exactly one positive root.
pub fn optimal_alpha(b1: f64, b2: f64, m: f64, gamma: f64) -> Result<f64, AnalysisError> {
    require(b1 > 0.0, "b1", b1, "must be > 0")?;
    require(b2 > 0.0, "b2", b2, "must be > 0")?;
    require(m > 0.0, "m", m, "must be > 0")?;
    require(gamma > 0.0, "gamma", gamma, "must be > 0")?;
    let poly = |a: f64| b1 * a * a * a + 3.0 * (b1 / gamma) * a * a - 2.0 * b2;
    let (mut lo, mut hi) = (0.0, 1.0);
    while poly(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if poly(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepThresholds {
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

/// Step-size thresholds below which the discretisation error bound holds.
/// `g` is the linear-growth constant of the gradient of the Laplacian of `f`.
pub fn step_thresholds(l: f64, m: f64, g: f64, alpha: f64, gamma: f64) -> Result<StepThresholds, AnalysisError> {
    require(g >= 0.0, "G", g, "must be >= 0")?;
    require(l > 0.0, "L", l, "must be > 0")?;
    let tc = theory_constants(l, m, alpha, gamma)?;
    let lp = tc.lambda_prime;
    require(lp > 0.0, "lambda'", lp, "must be > 0 (needs m > 0 and gamma^2 > L)")?;
    let kp = tc.kappa_prime;
    let spread = (alpha + 1.25).max(gamma + 1.0);
    let s2 = 2f64.sqrt();
    let h1 = lp.sqrt() / (4.0 * s2 * kp * l * spread * (1.92 + 2.30 * alpha * l));
    let h2 = lp / (16.0 * s2 * kp * (l + g) * spread * (1.74 + 0.71 * alpha));
    let h3 = lp / (8.0 * kp * l * spread * (1.92 + 2.30 * alpha * l));
    let h0 = (1.0 / (4.0 * kp * tc.l_prime)).min(h1).min(h2).min(h3);
    Ok(StepThresholds { h0, h1, h2, h3 })
}
