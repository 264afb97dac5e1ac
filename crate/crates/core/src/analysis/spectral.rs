//! Spectral radii of iteration matrices and the two 1D/2-block mean-process
//! studies: the Euler–Maruyama mean map on `f = q^2/2`, and the
//! ill-conditioned pair of blocks with Hessian eigenvalues `1` and `1/eps`.

use nalgebra::{DMatrix, Matrix2};

use super::{require, AnalysisError};

/// Largest eigenvalue modulus. 1x1 and 2x2 inputs use closed forms; larger
/// matrices go through a real Schur decomposition.
pub fn spectral_radius(t: &DMatrix<f64>) -> Result<f64, AnalysisError> {
    let (r, c) = t.shape();
    if r != c {
        return Err(AnalysisError::NotSquare { rows: r, cols: c });
    }
    Ok(match r {
        0 => 0.0,
        1 => t[(0, 0)].abs(),
        2 => radius_2x2(&Matrix2::new(t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)])),
        _ => t
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    })
}

/// Closed-form spectral radius of a real 2x2 matrix.
pub fn radius_2x2(a: &Matrix2<f64>) -> f64 {
    let half_tr = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let disc = half_tr * half_tr - det;
    if disc < 0.0 {
        // complex pair with modulus^2 = det
        return det.sqrt();
    }
    let big = half_tr + half_tr.signum() * disc.sqrt();
    if big == 0.0 {
        return 0.0;
    }
    let small = det / big;
    big.abs().max(small.abs())
}

/// Mean map of the Euler–Maruyama HFHR step on `f = q^2 / 2`.
pub fn em_mean_map_1d(alpha: f64, gamma: f64, h: f64) -> Matrix2<f64> {
    Matrix2::new(1.0 - alpha * h, h, -h, 1.0 - gamma * h)
}

/// `sqrt(1 - (alpha + gamma) h + (1 + alpha gamma) h^2)`, the common modulus
/// of the complex eigenvalue pair of [`em_mean_map_1d`]. `NaN` when the
/// radicand is negative.
pub fn em_modulus_formula(alpha: f64, gamma: f64, h: f64) -> f64 {
    (1.0 - (alpha + gamma) * h + (1.0 + alpha * gamma) * h * h).sqrt()
}

/// Block matrices of the two-eigenvalue Euler–Maruyama mean map with
/// Hessian spectrum `{1, 1/eps}`.
pub fn two_scale_blocks(eps: f64, alpha: f64, gamma: f64, h: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    (
        em_mean_map_1d(alpha, gamma, h),
        Matrix2::new(1.0 - alpha * h / eps, h, -h / eps, 1.0 - gamma * h),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UldTuning {
    pub h: f64,
    pub gamma: f64,
    pub discount: f64,
    /// `max` spectral radius of the two blocks at `(h, gamma, alpha = 0)`.
    pub block_radius: f64,
}

/// Fastest-contracting Euler–Maruyama ULD parameters for the Hessian
/// spectrum `{1, 1/eps}`.
pub fn uld_optimal_discount(eps: f64) -> Result<UldTuning, AnalysisError> {
    require(eps > 0.0 && eps < 1.0, "eps", eps, "must lie in (0, 1)")?;
    let h = (2.0 * eps / (1.0 + eps)).sqrt();
    let gamma = (2.0 * (1.0 + eps)).sqrt() / eps.sqrt();
    let discount = ((1.0 - eps) / (1.0 + eps)).sqrt();
    let (a1, a2) = two_scale_blocks(eps, 0.0, gamma, h);
    Ok(UldTuning {
        h,
        gamma,
        discount,
        block_radius: radius_2x2(&a1).max(radius_2x2(&a2)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfhrTuning {
    pub gamma: f64,
    pub alpha: f64,
    pub h: f64,
    pub discount: f64,
    pub block_radius: f64,
    /// `|tr A1|`
    pub trace_residual: f64,
    /// `|det A1 + det A2|`
    pub det_residual: f64,
}

/// HFHR Euler–Maruyama parameters with `h = c eps` chosen so that `A1` has a
/// `+/-` real eigenvalue pair and `A2` a complex pair of the same modulus.
pub fn hfhr_matched_modulus_parameters(eps: f64, c: f64) -> Result<HfhrTuning, AnalysisError> {
    require(eps > 0.0 && eps < 1.0, "eps", eps, "must lie in (0, 1)")?;
    require(c > 0.0 && c.is_finite(), "c", c, "must be > 0")?;
    let (e2, e3, e4, c2) = (eps * eps, eps.powi(3), eps.powi(4), c * c);
    let r = (4.0 * c2 * e4 + 8.0 * c2 * e3 + 4.0 * c2 * e2 + e2 - 2.0 * eps + 1.0).sqrt();
    let denom = 2.0 * c * e2 + 2.0 * c * eps;
    let gamma = (r + eps + 3.0) / denom;
    let alpha = (-r + 3.0 * eps + 1.0) / denom;
    let h = c * eps;
    require(alpha > 0.0, "alpha", alpha, "must be > 0 for these (eps, c)")?;
    require(gamma > 0.0, "gamma", gamma, "must be > 0 for these (eps, c)")?;
    let inner = (4.0 * c2 * e4 + 8.0 * c2 * e3 + (4.0 * c2 + 1.0) * e2 - 2.0 * eps + 1.0).sqrt();
    let discount = ((1.0 - eps) * (1.0 - eps + inner)).sqrt() / (2f64.sqrt() * (1.0 + eps));
    let (a1, a2) = two_scale_blocks(eps, alpha, gamma, h);
    Ok(HfhrTuning {
        gamma,
        alpha,
        h,
        discount,
        block_radius: radius_2x2(&a1).max(radius_2x2(&a2)),
        trace_residual: a1.trace().abs(),
        det_residual: (a1.determinant() + a2.determinant()).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eig_radius(a: &Matrix2<f64>) -> f64 {
        a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn basic_radii() {
        assert_eq!(spectral_radius(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        assert_eq!(spectral_radius(&DMatrix::identity(2, 2)).unwrap(), 1.0);
        assert!(spectral_radius(&DMatrix::zeros(2, 3)).is_err());
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 0.5).abs() < 1e-15);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, -0.9, 0.3, 0.5]));
        assert!((spectral_radius(&diag).unwrap() - 0.9).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_eigen_solver() {
        let cases = [
            [1.0, 2.0, 3.0, 4.0],
            [0.9, 0.1, -0.1, 0.8],
            [-3.0, 1.0, 0.0, 2.0],
            [0.0, 1.0, 0.0, 0.0],
            [1e-3, 1.0, -1e-6, 1e-3],
        ];
        for c in cases {
            let m = Matrix2::new(c[0], c[1], c[2], c[3]);
            assert!((radius_2x2(&m) - eig_radius(&m)).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn em_modulus_examples() {
        let (g, h) = (2.0, 0.1);
        let r = radius_2x2(&em_mean_map_1d(0.0, g, h));
        assert!((r - (1.0 - g * h + h * h).sqrt()).abs() < 1e-14);
        for &g in &[1.0, 2.0, 5.0] {
            let a = em_mean_map_1d(g + 2.0, g, 1.0 / (1.0 + g));
            assert!(radius_2x2(&a) < 1e-7);
            assert!((a * a).amax() < 1e-14);
        }
    }

    #[test]
    fn uld_tuning_examples() {
        let u = uld_optimal_discount(0.01).unwrap();
        assert!((u.discount - 0.990050).abs() < 1e-6);
        assert!((u.block_radius - u.discount).abs() < 1e-10);
        let u = uld_optimal_discount(0.25).unwrap();
        assert!((u.h - 0.632456).abs() < 1e-6);
        assert!((u.gamma - 3.162278).abs() < 1e-6);
        assert!(uld_optimal_discount(1.0 - 1e-12).unwrap().discount < 1e-5);
        assert!(uld_optimal_discount(0.0).is_err());
        assert!(uld_optimal_discount(1.0).is_err());
    }

    #[test]
    fn uld_tuning_is_grid_optimal() {
        let eps = 0.01;
        let best = uld_optimal_discount(eps).unwrap();
        let mut grid_best = f64::INFINITY;
        // neighbourhood of the optimum at resolution 1e-3
        for i in -100..=100 {
            let h = best.h + i as f64 * 1e-3;
            for j in -100..=100 {
                let g = best.gamma + j as f64 * 1e-3 * 10.0;
                if h <= 0.0 || g <= 0.0 {
                    continue;
                }
                let (a1, a2) = two_scale_blocks(eps, 0.0, g, h);
                grid_best = grid_best.min(radius_2x2(&a1).max(radius_2x2(&a2)));
            }
        }
        assert!(grid_best >= best.discount - 1e-9, "{grid_best} < {}", best.discount);
    }

    #[test]
    fn hfhr_tuning_examples() {
        let p = hfhr_matched_modulus_parameters(0.1, 1.0).unwrap();
        assert!(p.trace_residual < 1e-10);
        assert!(p.det_residual < 1e-10);
        assert!((p.block_radius - p.discount).abs() < 1e-10);
        for &eps in &[0.01, 0.05, 0.1, 0.2, 0.4] {
            let p = hfhr_matched_modulus_parameters(eps, 1.0).unwrap();
            let u = uld_optimal_discount(eps).unwrap();
            assert!(p.discount < u.discount, "eps={eps}");
        }
        let p = hfhr_matched_modulus_parameters(0.01, 1.0).unwrap();
        assert!((p.discount - 0.98025).abs() < 1e-5);
        assert!(hfhr_matched_modulus_parameters(0.1, 0.0).is_err());
    }

    #[test]
    fn taylor_expansions() {
        let eps: f64 = 1e-3;
        for &c in &[0.5, 1.0, 2.0] {
            let p = hfhr_matched_modulus_parameters(eps, c).unwrap();
            let taylor = 1.0 - 2.0 * eps + (c * c / 2.0 + 2.0) * eps * eps;
            assert!((p.discount - taylor).abs() < 1e-6);
        }
        let u = uld_optimal_discount(eps).unwrap();
        assert!((u.discount - (1.0 - eps + 0.5 * eps * eps)).abs() < 1e-6);
    }
}
