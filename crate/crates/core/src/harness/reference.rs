//! Reference laws that the metrics compare against.
//!
//! Closed forms exist for every built-in: quadratics are Gaussian,
//! one-dimensional targets are integrated numerically, `rosenbrock2d` has
//! polynomial moments and `coupled_logcosh` reduces to a 1D integral along
//! the all-ones direction. A benchmark reference instead runs a separate
//! sampler for a long time and uses its final empirical law.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{InitSpec, PotentialSpec};
use super::run::Ensemble;
use super::HarnessError;
use crate::gaussian::GaussianSummary;
use crate::metrics::{empirical_moments_rows, target_bin_masses, HistogramDensity};
use crate::potentials::PotentialModel;
use crate::samplers::{Kernel, SamplerConfig};

type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Target law of the position coordinates.
#[derive(Clone)]
pub struct ReferenceLaw {
    /// Mean and covariance of `q` under the reference.
    pub position: GaussianSummary,
    /// The reference is exactly Gaussian with these moments.
    pub exact_gaussian: bool,
    /// Normalised density, for one-dimensional closed forms.
    pub density_1d: Option<Density>,
    /// Samples, for one-dimensional benchmark references.
    pub samples_1d: Option<Vec<f64>>,
}

impl std::fmt::Debug for ReferenceLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceLaw")
            .field("position", &self.position)
            .field("exact_gaussian", &self.exact_gaussian)
            .field("density_1d", &self.density_1d.is_some())
            .field("samples_1d", &self.samples_1d.as_ref().map(|s| s.len()))
            .finish()
    }
}

impl ReferenceLaw {
    /// `(q, p)` law: the position law times an independent `N(0, I)`.
    pub fn joint(&self) -> GaussianSummary {
        let d = self.position.dim();
        let mut mean = DVector::zeros(2 * d);
        mean.rows_mut(0, d).copy_from(&self.position.mean);
        let mut cov = DMatrix::identity(2 * d, 2 * d);
        cov.view_mut((0, 0), (d, d)).copy_from(&self.position.cov);
        GaussianSummary { mean, cov }
    }

    /// Reference bin masses on `[lo, hi]` (1D only).
    pub fn bin_masses(&self, lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>, HarnessError> {
        if let Some(density) = &self.density_1d {
            return Ok(target_bin_masses(|x| density(x), lo, hi, bins)?);
        }
        if let Some(samples) = &self.samples_1d {
            return Ok(HistogramDensity::from_samples(samples, lo, hi, bins)?.masses());
        }
        Err(HarnessError::Config(
            "chi2_hist needs a one-dimensional reference density or sample set".into(),
        ))
    }
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Interval outside which `f - f(0)` exceeds 60 (density below `e^-60`).
fn effective_support(f: &impl Fn(f64) -> f64) -> (f64, f64) {
    let base = f(0.0);
    let edge = |sign: f64| {
        let mut x = 1.0;
        while f(sign * x) - base < 60.0 && x < 1e6 {
            x *= 1.5;
        }
        sign * x
    };
    (edge(-1.0), edge(1.0))
}

const QUAD_INTERVALS: usize = 400_000;

fn one_dim_reference(model: &PotentialModel) -> ReferenceLaw {
    let m = model.clone();
    let f = move |x: f64| m.value(&[x]);
    let base = f(0.0);
    let (a, b) = effective_support(&f);
    let w = |x: f64| (-(f(x) - base)).exp();
    let z = simpson(w, a, b, QUAD_INTERVALS);
    let mean = simpson(|x| x * w(x), a, b, QUAD_INTERVALS) / z;
    let var = simpson(|x| (x - mean) * (x - mean) * w(x), a, b, QUAD_INTERVALS) / z;
    let m2 = model.clone();
    let density: Density = Arc::new(move |x: f64| (-(m2.value(&[x]) - base)).exp() / z);
    ReferenceLaw {
        position: GaussianSummary {
            mean: DVector::from_element(1, mean),
            cov: DMatrix::from_element(1, 1, var),
        },
        exact_gaussian: false,
        density_1d: Some(density),
        samples_1d: None,
    }
}

/// Variance of `s` under the density proportional to `exp(-s^2/2) / cosh s`.
pub fn logcosh_direction_variance() -> f64 {
    let w = |s: f64| (-0.5 * s * s - crate::potentials::log_cosh(s)).exp();
    let z = simpson(w, -40.0, 40.0, QUAD_INTERVALS);
    simpson(|s| s * s * w(s), -40.0, 40.0, QUAD_INTERVALS) / z
}

/// Closed-form reference of a built-in potential.
pub fn closed_form_reference(model: &PotentialModel) -> Result<ReferenceLaw, HarnessError> {
    let d = model.dim();
    if let Some(h) = model.quadratic_hessian() {
        let cov = h
            .clone()
            .try_inverse()
            .ok_or_else(|| HarnessError::Config(format!("potential '{}' has a singular Hessian", model.name())))?;
        let position = GaussianSummary {
            mean: DVector::zeros(d),
            cov: crate::gaussian::sym(&cov),
        };
        let density_1d: Option<Density> = if d == 1 {
            let v = position.cov[(0, 0)];
            Some(Arc::new(move |x: f64| {
                (-0.5 * x * x / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
            }))
        } else {
            None
        };
        return Ok(ReferenceLaw {
            position,
            exact_gaussian: true,
            density_1d,
            samples_1d: None,
        });
    }
    match model.name() {
        "quartic" | "perturbed" | "bimodal" => Ok(one_dim_reference(model)),
        "rosenbrock2d" => {
            // x ~ N(1, 1), y | x ~ N(x^2, 1/10)
            Ok(ReferenceLaw {
                position: GaussianSummary {
                    mean: DVector::from_vec(vec![1.0, 2.0]),
                    cov: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 6.1]),
                },
                exact_gaussian: false,
                density_1d: None,
                samples_1d: None,
            })
        }
        "coupled_logcosh" => {
            let u = DVector::from_element(d, 1.0 / (d as f64).sqrt());
            let cov = DMatrix::identity(d, d) + (&u * u.transpose()) * (logcosh_direction_variance() - 1.0);
            Ok(ReferenceLaw {
                position: GaussianSummary {
                    mean: DVector::zeros(d),
                    cov,
                },
                exact_gaussian: false,
                density_1d: None,
                samples_1d: None,
            })
        }
        other => Err(HarnessError::Config(format!(
            "no closed-form reference for potential '{other}'; use a benchmark_run reference"
        ))),
    }
}

#[derive(Serialize)]
struct CacheKey<'a> {
    version: u32,
    potential: &'a PotentialSpec,
    init: &'a InitSpec,
    sampler: &'a SamplerConfig,
    steps: u64,
    chains: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    samples: Option<Vec<f64>>,
}

/// Stream id reserved for benchmark chains.
pub const BENCHMARK_STREAM: u32 = u32::MAX;

/// Hex SHA-256 of the benchmark inputs.
pub fn benchmark_cache_key(
    potential: &PotentialSpec,
    init: &InitSpec,
    sampler: &SamplerConfig,
    steps: u64,
    chains: usize,
    seed: u64,
) -> String {
    let key = CacheKey {
        version: 1,
        potential,
        init,
        sampler,
        steps,
        chains,
        seed,
    };
    let bytes = serde_json::to_vec(&key).expect("cache key serialises");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs (or loads from `cache_dir`) a benchmark reference.
#[allow(clippy::too_many_arguments)]
pub fn benchmark_reference(
    potential: &PotentialSpec,
    init: &InitSpec,
    sampler: &SamplerConfig,
    steps: u64,
    chains: usize,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<ReferenceLaw, HarnessError> {
    let model = potential.build()?;
    let d = model.dim();
    let key = benchmark_cache_key(potential, init, sampler, steps, chains, seed);
    let cache_file = cache_dir.map(|dir| dir.join(format!("{key}.json")));
    if let Some(path) = &cache_file {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(c) = serde_json::from_str::<CachedReference>(&text) {
                if c.mean.len() == d {
                    return Ok(from_cached(c));
                }
            }
        }
    }

    let kernel = Kernel::new(*sampler)?;
    let mut ens = Ensemble::new(&model, init, seed, BENCHMARK_STREAM, chains)?;
    if let Some(step) = ens.advance(&kernel, &model, steps) {
        return Err(HarnessError::BenchmarkDiverged { step });
    }
    let rows = ens.positions();
    let moments = empirical_moments_rows(&rows)?;
    let cached = CachedReference {
        mean: moments.mean.iter().copied().collect(),
        cov: (0..d).map(|i| moments.cov.row(i).iter().copied().collect()).collect(),
        samples: (d == 1).then(|| rows.column(0).iter().copied().collect()),
    };
    if let Some(path) = &cache_file {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let text = serde_json::to_string(&cached).expect("reference serialises");
        fs::write(path, text).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(from_cached(cached))
}

fn from_cached(c: CachedReference) -> ReferenceLaw {
    let d = c.mean.len();
    ReferenceLaw {
        position: GaussianSummary {
            mean: DVector::from_vec(c.mean),
            cov: DMatrix::from_fn(d, d, |i, j| c.cov[i][j]),
        },
        exact_gaussian: false,
        density_1d: None,
        samples_1d: c.samples,
    }
}
