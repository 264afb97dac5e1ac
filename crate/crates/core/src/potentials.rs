//! Target potentials `f` for the density `exp(-f)`.
//!
//! A [`PotentialModel`] bundles the value and gradient of `f` with whatever
//! regularity constants are known analytically. The built-in corpus is the
//! set of test targets used by the experiment harness (`quadratic_iso`,
//! `quadratic_aniso`, `quartic`, `perturbed`, `bimodal`, `rosenbrock2d`,
//! `coupled_logcosh`). Every built-in except `rosenbrock2d` is translated so
//! that the origin is a global minimiser.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Names accepted by [`builtin_potential`].
pub const BUILTIN_NAMES: [&str; 7] = [
    "quadratic_iso",
    "quadratic_aniso",
    "quartic",
    "perturbed",
    "bimodal",
    "rosenbrock2d",
    "coupled_logcosh",
];

/// Relative finite-difference step used by [`gradient_check`] and the
/// numerical Hessian.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("unknown potential '{name}'; valid names are: {}", BUILTIN_NAMES.join(", "))]
    UnknownName { name: String },
    #[error("potential '{potential}': parameter '{key}' {reason}")]
    InvalidParam {
        potential: String,
        key: String,
        reason: String,
    },
    #[error("potential '{potential}' does not accept parameter '{key}' (accepted: {accepted})")]
    UnknownParam {
        potential: String,
        key: String,
        accepted: String,
    },
    #[error("strong convexity {m} exceeds smoothness {l}")]
    InconsistentConstants { m: f64, l: f64 },
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Analytically known regularity constants of a potential.
///
/// `strong_convexity == Some(0.0)` encodes "convex but not strongly convex";
/// `None` means no convexity is claimed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PotentialConstants {
    pub smoothness: Option<f64>,
    pub strong_convexity: Option<f64>,
    pub poincare: Option<f64>,
    pub third_deriv_growth: Option<f64>,
}

/// A potential `f : R^d -> R` with its gradient. Immutable and cheap to clone.
#[derive(Clone)]
pub struct PotentialModel {
    name: String,
    params: BTreeMap<String, f64>,
    dim: usize,
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
    constants: PotentialConstants,
    hessian: Option<DMatrix<f64>>,
}

impl fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialModel")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("dim", &self.dim)
            .field("constants", &self.constants)
            .finish()
    }
}

impl PotentialModel {
    /// Wraps user-supplied value and gradient closures. The gradient writes
    /// into its second argument, which always has length `dim`.
    pub fn new<V, G>(name: impl Into<String>, dim: usize, value: V, grad: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(dim >= 1, "potential dimension must be positive");
        Self {
            name: name.into(),
            params: BTreeMap::new(),
            dim,
            value: Arc::new(value),
            grad: Arc::new(grad),
            constants: PotentialConstants::default(),
            hessian: None,
        }
    }

    /// Centered quadratic `f(q) = q^T H q / 2`. The Hessian is retained so
    /// that exact Gaussian analytics can be run against the model.
    pub fn quadratic(name: impl Into<String>, hessian: DMatrix<f64>) -> Self {
        assert!(hessian.is_square(), "quadratic Hessian must be square");
        let dim = hessian.nrows();
        let hv = hessian.clone();
        let hg = hessian.clone();
        let mut model = Self::new(
            name,
            dim,
            move |q| {
                let mut acc = 0.0;
                for i in 0..q.len() {
                    let mut row = 0.0;
                    for j in 0..q.len() {
                        row += hv[(i, j)] * q[j];
                    }
                    acc += q[i] * row;
                }
                0.5 * acc
            },
            move |q, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut row = 0.0;
                    for (j, qj) in q.iter().enumerate() {
                        row += hg[(i, j)] * qj;
                    }
                    *o = row;
                }
            },
        );
        model.hessian = Some(hessian);
        model
    }

    pub fn with_constants(mut self, constants: PotentialConstants) -> Result<Self, PotentialError> {
        if let (Some(m), Some(l)) = (constants.strong_convexity, constants.smoothness) {
            if m > l {
                return Err(PotentialError::InconsistentConstants { m, l });
            }
        }
        self.constants = constants;
        Ok(self)
    }

    fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constants(&self) -> &PotentialConstants {
        &self.constants
    }

    /// Hessian of a quadratic model, `None` otherwise.
    pub fn quadratic_hessian(&self) -> Option<&DMatrix<f64>> {
        self.hessian.as_ref()
    }

    pub fn value(&self, q: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), self.dim);
        (self.value)(q)
    }

    pub fn gradient(&self, q: &[f64], out: &mut [f64]) {
        debug_assert_eq!(q.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        (self.grad)(q, out)
    }

    pub fn gradient_vec(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.gradient(q, &mut out);
        out
    }

    /// Dense Hessian by central differences of the gradient, symmetrised.
    pub fn numerical_hessian(&self, q: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut hess = DMatrix::zeros(d, d);
        let mut x = q.to_vec();
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for j in 0..d {
            let step = FD_STEP * q[j].abs().max(1.0);
            x[j] = q[j] + step;
            self.gradient(&x, &mut gp);
            x[j] = q[j] - step;
            self.gradient(&x, &mut gm);
            x[j] = q[j];
            for i in 0..d {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        let t = hess.transpose();
        (hess + t) * 0.5
    }
}

struct ParamReader<'a> {
    potential: &'a str,
    params: &'a BTreeMap<String, f64>,
}

impl ParamReader<'_> {
    fn check_keys(&self, accepted: &[&str]) -> Result<(), PotentialError> {
        for key in self.params.keys() {
            if !accepted.contains(&key.as_str()) {
                return Err(PotentialError::UnknownParam {
                    potential: self.potential.to_string(),
                    key: key.clone(),
                    accepted: accepted.join(", "),
                });
            }
        }
        Ok(())
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> PotentialError {
        PotentialError::InvalidParam {
            potential: self.potential.to_string(),
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn real(&self, key: &str, default: Option<f64>) -> Result<f64, PotentialError> {
        match (self.params.get(key), default) {
            (Some(&v), _) if v.is_finite() => Ok(v),
            (Some(_), _) => Err(self.invalid(key, "must be finite")),
            (None, Some(v)) => Ok(v),
            (None, None) => Err(self.invalid(key, "is required")),
        }
    }

    fn positive(&self, key: &str, default: Option<f64>) -> Result<f64, PotentialError> {
        let v = self.real(key, default)?;
        if v <= 0.0 {
            return Err(self.invalid(key, format!("must be > 0 (got {v})")));
        }
        Ok(v)
    }

    fn dim(&self, default: usize) -> Result<usize, PotentialError> {
        let v = self.real("d", Some(default as f64))?;
        if v < 1.0 || v.fract() != 0.0 || v > 1e7 {
            return Err(self.invalid("d", format!("must be a positive integer (got {v})")));
        }
        Ok(v as usize)
    }

    fn fixed_dim(&self, required: usize) -> Result<(), PotentialError> {
        let d = self.dim(required)?;
        if d != required {
            return Err(self.invalid("d", format!("must be {required} for this potential (got {d})")));
        }
        Ok(())
    }
}

/// Builds one of the named test potentials.
///
/// Parameter keys: `m` (curvature scale, > 0), `kappa` (condition number,
/// at least 1) and `d` (dimension, positive integer). `quadratic_aniso` with
/// `(m, kappa, d)` is `G^d_{m,kappa}(x) = m/2 (kappa x_d^2 + sum_{i<d} x_i^2)`.
pub fn builtin_potential(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> Result<PotentialModel, PotentialError> {
    let reader = ParamReader {
        potential: name,
        params,
    };
    let model = match name {
        "quadratic_iso" => {
            reader.check_keys(&["m", "d"])?;
            let m = reader.positive("m", Some(1.0))?;
            let d = reader.dim(1)?;
            PotentialModel::quadratic(name, DMatrix::identity(d, d) * m).with_constants(
                PotentialConstants {
                    smoothness: Some(m),
                    strong_convexity: Some(m),
                    poincare: Some(m),
                    third_deriv_growth: Some(0.0),
                },
            )?
        }
        "quadratic_aniso" => {
            reader.check_keys(&["m", "kappa", "d"])?;
            let m = reader.positive("m", None)?;
            let kappa = reader.real("kappa", None)?;
            if kappa < 1.0 {
                return Err(reader.invalid("kappa", format!("must be >= 1 (got {kappa})")));
            }
            let d = reader.dim(2)?;
            let mut hess = DMatrix::identity(d, d) * m;
            hess[(d - 1, d - 1)] = m * kappa;
            let lo = if d == 1 { m * kappa } else { m };
            PotentialModel::quadratic(name, hess).with_constants(PotentialConstants {
                smoothness: Some(m * kappa),
                strong_convexity: Some(lo),
                poincare: Some(lo),
                third_deriv_growth: Some(0.0),
            })?
        }
        "quartic" => {
            reader.check_keys(&["d"])?;
            reader.fixed_dim(1)?;
            // f(x) = x^4 / 4; grad Laplacian = 6x.
            PotentialModel::new(name, 1, |q| 0.25 * q[0].powi(4), |q, g| g[0] = q[0].powi(3))
                .with_constants(PotentialConstants {
                    smoothness: None,
                    strong_convexity: Some(0.0),
                    poincare: None,
                    third_deriv_growth: Some(6.0),
                })?
        }
        "perturbed" => {
            reader.check_keys(&["d"])?;
            reader.fixed_dim(1)?;
            let shift = perturbed_minimiser();
            let base = perturbed_raw(shift);
            PotentialModel::new(
                name,
                1,
                move |q| perturbed_raw(q[0] + shift) - base,
                move |q, g| {
                    let x = q[0] + shift;
                    g[0] = x + (10.0 * x).cos();
                },
            )
            .with_constants(PotentialConstants {
                smoothness: Some(11.0),
                strong_convexity: None,
                poincare: None,
                third_deriv_growth: Some(100.0),
            })?
        }
        "bimodal" => {
            reader.check_keys(&["d"])?;
            reader.fixed_dim(1)?;
            // 5(y^4 - 2y^2) + 5 with y = x + 1, i.e. 5 x^2 (x + 2)^2: minima at 0 and -2.
            PotentialModel::new(
                name,
                1,
                |q| {
                    let x = q[0];
                    5.0 * x * x * (x + 2.0) * (x + 2.0)
                },
                |q, g| {
                    let x = q[0];
                    g[0] = 20.0 * x * (x + 1.0) * (x + 2.0);
                },
            )
            .with_constants(PotentialConstants {
                smoothness: None,
                strong_convexity: None,
                poincare: None,
                third_deriv_growth: Some(120.0 * std::f64::consts::SQRT_2),
            })?
        }
        "rosenbrock2d" => {
            reader.check_keys(&["d"])?;
            reader.fixed_dim(2)?;
            PotentialModel::new(
                name,
                2,
                |q| {
                    let (x, y) = (q[0], q[1]);
                    0.5 * ((x - 1.0).powi(2) + 10.0 * (y - x * x).powi(2))
                },
                |q, g| {
                    let (x, y) = (q[0], q[1]);
                    let r = y - x * x;
                    g[0] = (x - 1.0) - 20.0 * x * r;
                    g[1] = 10.0 * r;
                },
            )
        }
        "coupled_logcosh" => {
            reader.check_keys(&["d"])?;
            let d = reader.dim(10)?;
            let scale = 1.0 / (d as f64).sqrt();
            PotentialModel::new(
                name,
                d,
                move |q| {
                    let s: f64 = q.iter().sum::<f64>() * scale;
                    0.5 * q.iter().map(|x| x * x).sum::<f64>() + log_cosh(s)
                },
                move |q, g| {
                    let s: f64 = q.iter().sum::<f64>() * scale;
                    let t = s.tanh() * scale;
                    for (gi, qi) in g.iter_mut().zip(q) {
                        *gi = qi + t;
                    }
                },
            )
            .with_constants(PotentialConstants {
                smoothness: Some(2.0),
                strong_convexity: Some(1.0),
                poincare: Some(1.0),
                // max |d/ds sech^2(s)| = 4 / (3 sqrt 3)
                third_deriv_growth: Some(4.0 / (3.0 * 3f64.sqrt())),
            })?
        }
        other => {
            return Err(PotentialError::UnknownName {
                name: other.to_string(),
            })
        }
    };
    Ok(model.with_params(params.clone()))
}

/// Convenience wrapper over [`builtin_potential`] taking `(key, value)` pairs.
pub fn builtin(name: &str, params: &[(&str, f64)]) -> Result<PotentialModel, PotentialError> {
    let map = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_potential(name, &map)
}

/// Overflow-safe `log cosh`.
pub fn log_cosh(s: f64) -> f64 {
    let a = s.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn perturbed_raw(x: f64) -> f64 {
    (5.0 * x * x + (10.0 * x).sin()) / 10.0
}

/// Global minimiser of `(5x^2 + sin 10x) / 10`: the stationary point in the
/// well around `x = -pi/20`, found by bisection on `x + cos 10x`.
fn perturbed_minimiser() -> f64 {
    let dfun = |x: f64| x + (10.0 * x).cos();
    let (mut lo, mut hi) = (-0.2_f64, -0.1_f64);
    debug_assert!(dfun(lo) < 0.0 && dfun(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dfun(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub trials: usize,
    pub tolerance: f64,
    pub max_rel_error: f64,
    /// Point at which the largest error was observed.
    pub worst_point: Vec<f64>,
}

impl GradientCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Compares the analytic gradient with central differences of the value at
/// `trials` standard-normal points. The error at a point is
/// `max_i |fd_i - g_i| / max(|g|_inf, |fd|_inf, 1)`.
pub fn gradient_check<R: Rng + ?Sized>(
    model: &PotentialModel,
    trials: usize,
    tol: f64,
    rng: &mut R,
) -> GradientCheckReport {
    assert!(trials >= 1, "gradient_check needs at least one trial");
    let d = model.dim();
    let mut report = GradientCheckReport {
        trials,
        tolerance: tol,
        max_rel_error: 0.0,
        worst_point: vec![0.0; d],
    };
    let mut grad = vec![0.0; d];
    let mut fd = vec![0.0; d];
    for _ in 0..trials {
        let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        model.gradient(&x, &mut grad);
        for j in 0..d {
            let xj = x[j];
            let step = FD_STEP * xj.abs().max(1.0);
            x[j] = xj + step;
            let fp = model.value(&x);
            x[j] = xj - step;
            let fm = model.value(&x);
            x[j] = xj;
            fd[j] = (fp - fm) / (2.0 * step);
        }
        let scale = grad
            .iter()
            .chain(fd.iter())
            .fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let err = grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max)
            / scale;
        if !(err <= report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_point = x.clone();
        }
    }
    report
}
