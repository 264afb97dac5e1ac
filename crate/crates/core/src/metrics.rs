//! Distances and convergence diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::gaussian::{sym, GaussianSummary, PSD_TOL};

/// Default number of histogram bins.
pub const DEFAULT_BINS: usize = 50;
/// Default histogram half-width in pooled standard deviations.
pub const DEFAULT_RANGE_SDS: f64 = 6.0;
/// Midpoint-rule nodes per bin when integrating a target density.
pub const SUBPOINTS_PER_BIN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("covariance is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{name} = {value} {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("target has zero mass in non-empty bin {bin} [{lo}, {hi})")]
    ZeroTargetMass { bin: usize, lo: f64, hi: f64 },
    #[error("log-scale fit requires positive data; point {index} is ({x}, {y})")]
    NonPositiveData { index: usize, x: f64, y: f64 },
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> MetricsError {
    MetricsError::InvalidParameter { name, value, reason }
}

/// Symmetric PSD square root, clamping negative eigenvalues to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    sym(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
}

fn check_psd(cov: &DMatrix<f64>) -> Result<(), MetricsError> {
    if cov.nrows() == 0 {
        return Ok(());
    }
    let min = sym(cov).symmetric_eigenvalues().min();
    if min < -PSD_TOL * cov.amax().max(1.0) {
        return Err(MetricsError::NotPsd(min));
    }
    Ok(())
}

/// 2-Wasserstein distance between two Gaussian laws.
pub fn w2_gaussian(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() || a.cov.nrows() != a.dim() || b.cov.nrows() != b.dim() {
        return Err(MetricsError::DimensionMismatch(a.dim(), b.dim()));
    }
    check_psd(&a.cov)?;
    check_psd(&b.cov)?;
    let mean_sq = (&a.mean - &b.mean).norm_squared();
    let rb = psd_sqrt(&b.cov);
    let cross = psd_sqrt(&(&rb * &a.cov * &rb));
    let bures = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    Ok((mean_sq + bures.max(0.0)).sqrt())
}

/// Sample mean and unbiased covariance of points given as rows.
pub fn empirical_moments_rows(samples: &DMatrix<f64>) -> Result<GaussianSummary, MetricsError> {
    let n = samples.nrows();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    let mean: DVector<f64> = samples.row_mean().transpose();
    let mut centred = samples.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    Ok(GaussianSummary { mean, cov: sym(&cov) })
}

/// Sample mean and unbiased covariance.
pub fn empirical_moments(samples: &[Vec<f64>]) -> Result<GaussianSummary, MetricsError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(MetricsError::DimensionMismatch(d, bad.len()));
    }
    let rows = DMatrix::from_fn(n, d, |i, j| samples[i][j]);
    empirical_moments_rows(&rows)
}

/// Euclidean distance between a law's mean and `target_mean`.
pub fn mean_error(summary: &GaussianSummary, target_mean: &DVector<f64>) -> Result<f64, MetricsError> {
    if summary.dim() != target_mean.len() {
        return Err(MetricsError::DimensionMismatch(summary.dim(), target_mean.len()));
    }
    Ok((&summary.mean - target_mean).norm())
}

/// Equal-width histogram on `[lo, hi]`; out-of-range samples are counted in
/// the boundary bins.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramDensity {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl HistogramDensity {
    pub fn from_samples(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self, MetricsError> {
        check_range(lo, hi, bins)?;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(MetricsError::NonFiniteSample(i));
        }
        let width = (hi - lo) / bins as f64;
        let counts = samples
            .par_chunks(4096)
            .map(|chunk| {
                let mut c = vec![0u64; bins];
                for &x in chunk {
                    let j = ((x - lo) / width).floor();
                    let j = if j < 0.0 { 0 } else { (j as usize).min(bins - 1) };
                    c[j] += 1;
                }
                c
            })
            .reduce(
                || vec![0u64; bins],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        Ok(Self { lo, hi, counts })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self, j: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.bins() as f64;
        (self.lo + j as f64 * w, self.lo + (j + 1) as f64 * w)
    }

    /// Empirical bin masses, summing to one.
    pub fn masses(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

fn check_range(lo: f64, hi: f64, bins: usize) -> Result<(), MetricsError> {
    if bins < 2 {
        return Err(invalid("bins", bins as f64, "must be >= 2"));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(invalid("hi - lo", hi - lo, "must be finite and > 0"));
    }
    Ok(())
}

/// Target bin masses on `[lo, hi]` by the midpoint rule, normalised to one.
pub fn target_bin_masses<F: Fn(f64) -> f64>(density: F, lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>, MetricsError> {
    check_range(lo, hi, bins)?;
    let w = (hi - lo) / bins as f64;
    let sub = w / SUBPOINTS_PER_BIN as f64;
    let raw: Vec<f64> = (0..bins)
        .map(|j| {
            let start = lo + j as f64 * w;
            (0..SUBPOINTS_PER_BIN)
                .map(|k| density(start + (k as f64 + 0.5) * sub).max(0.0))
                .sum::<f64>()
                * sub
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(invalid("target mass", total, "must be finite and > 0 on [lo, hi]"));
    }
    Ok(raw.into_iter().map(|m| m / total).collect())
}

/// `sum_j (p_j - q_j)^2 / q_j` between a histogram and target bin masses.
pub fn chi2_from_masses(hist: &HistogramDensity, target: &[f64]) -> Result<f64, MetricsError> {
    if target.len() != hist.bins() {
        return Err(MetricsError::DimensionMismatch(hist.bins(), target.len()));
    }
    let p = hist.masses();
    let mut sum = 0.0;
    for (j, (&pj, &qj)) in p.iter().zip(target).enumerate() {
        if qj <= 0.0 {
            if hist.counts[j] > 0 {
                let (lo, hi) = hist.bin_edges(j);
                return Err(MetricsError::ZeroTargetMass { bin: j, lo, hi });
            }
            continue;
        }
        sum += (pj - qj) * (pj - qj) / qj;
    }
    Ok(sum)
}

/// Histogram estimate of the chi-square divergence of the sample law from a
/// target density.
pub fn chi2_histogram<F: Fn(f64) -> f64>(
    samples: &[f64],
    target_density: F,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<f64, MetricsError> {
    let hist = HistogramDensity::from_samples(samples, lo, hi, bins)?;
    let target = target_bin_masses(target_density, lo, hi, bins)?;
    chi2_from_masses(&hist, &target)
}

/// `mean +/- DEFAULT_RANGE_SDS * sd` of the samples.
pub fn default_histogram_range(samples: &[f64]) -> Result<(f64, f64), MetricsError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt().max(1e-12);
    Ok((mean - DEFAULT_RANGE_SDS * sd, mean + DEFAULT_RANGE_SDS * sd))
}

/// Exact `chi^2(N(m1, s1^2) || N(m2, s2^2))`; infinite when `2 s2^2 <= s1^2`.
pub fn chi2_gaussian_1d(m1: f64, s1: f64, m2: f64, s2: f64) -> Result<f64, MetricsError> {
    if !(s1 > 0.0) {
        return Err(invalid("s1", s1, "must be > 0"));
    }
    if !(s2 > 0.0) {
        return Err(invalid("s2", s2, "must be > 0"));
    }
    let spread = 2.0 * s2 * s2 - s1 * s1;
    if spread <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let dm = m1 - m2;
    // chi^2 + 1 = s2^2 / (s1 sqrt(spread)) * exp(dm^2 / spread)
    let log_ratio = 2.0 * s2.ln() - s1.ln() - 0.5 * spread.ln() + dm * dm / spread;
    Ok(log_ratio.exp_m1().max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::DimensionMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("x spread", 0.0, "must be > 0"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Least-squares fit of `ln y` on `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<LinearFit, MetricsError> {
    if xs.len() < 3 {
        return Err(MetricsError::TooFewSamples { needed: 3, got: xs.len() });
    }
    positive(xs, ys, true)?;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Least-squares fit of `ln y` on `x`; the slope is minus the decay rate.
pub fn semilog_slope(xs: &[f64], ys: &[f64]) -> Result<LinearFit, MetricsError> {
    positive(xs, ys, false)?;
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(xs, &ly)
}

fn positive(xs: &[f64], ys: &[f64], check_x: bool) -> Result<(), MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::DimensionMismatch(xs.len(), ys.len()));
    }
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if !(y > 0.0) || (check_x && !(x > 0.0)) || !y.is_finite() || !x.is_finite() {
            return Err(MetricsError::NonPositiveData { index: i, x, y });
        }
    }
    Ok(())
}
