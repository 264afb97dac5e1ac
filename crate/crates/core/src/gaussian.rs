//! Gaussian laws summarised by their first two moments.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Absolute asymmetry allowed in a covariance, relative to its largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated in a covariance.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("mean has length {mean} but covariance is {rows}x{cols}")]
    Shape { mean: usize, rows: usize, cols: usize },
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("covariance is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("covariance contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianSummary {
    /// Validated constructor: square, matching, symmetric and PSD within
    /// [`SYMMETRY_TOL`] and [`PSD_TOL`].
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, GaussianError> {
        let s = Self::new_unchecked(mean, cov)?;
        s.check_psd()?;
        Ok(s)
    }

    /// Shape and symmetry checks only.
    pub fn new_unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, GaussianError> {
        if cov.nrows() != cov.ncols() || cov.nrows() != mean.len() {
            return Err(GaussianError::Shape {
                mean: mean.len(),
                rows: cov.nrows(),
                cols: cov.ncols(),
            });
        }
        if cov.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL * cov.amax().max(1.0) {
            return Err(GaussianError::Asymmetric(asym));
        }
        Ok(Self { mean, cov })
    }

    /// `N(0, I_n)`.
    pub fn standard(n: usize) -> Self {
        Self {
            mean: DVector::zeros(n),
            cov: DMatrix::identity(n, n),
        }
    }

    /// `N(mean, I_n)`.
    pub fn unit_cov(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        sym(&self.cov).symmetric_eigenvalues().min()
    }

    pub fn check_psd(&self) -> Result<(), GaussianError> {
        let min = self.min_eigenvalue();
        if min < -PSD_TOL * self.cov.amax().max(1.0) {
            return Err(GaussianError::NotPsd(min));
        }
        Ok(())
    }

    /// Marginal over the coordinates `range`.
    pub fn marginal(&self, start: usize, len: usize) -> Self {
        Self {
            mean: self.mean.rows(start, len).into_owned(),
            cov: self.cov.view((start, start), (len, len)).into_owned(),
        }
    }
}

/// `(A + A^T) / 2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
