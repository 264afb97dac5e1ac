//! JSON experiment configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::potentials::{builtin_potential, PotentialModel};
use crate::samplers::{SamplerConfig, SamplerKind, SamplerError};

pub const DEFAULT_CHAINS: usize = 10_000;
pub const DEFAULT_BINS: usize = crate::metrics::DEFAULT_BINS;
/// Step size of the default benchmark sampler.
pub const DEFAULT_BENCHMARK_STEP: f64 = 0.0005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl PotentialSpec {
    pub fn build(&self) -> Result<PotentialModel, HarnessError> {
        Ok(builtin_potential(&self.name, &self.params)?)
    }
}

/// A scalar broadcast to every coordinate, or one value per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Broadcast {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Broadcast {
    pub fn expand(&self, d: usize) -> Option<Vec<f64>> {
        match self {
            Broadcast::Scalar(v) => Some(vec![*v; d]),
            Broadcast::Vector(v) if v.len() == d => Some(v.clone()),
            Broadcast::Vector(_) => None,
        }
    }
}

/// Initial law: independent `q_i ~ N(q_mean_i, q_std^2)`,
/// `p_i ~ N(p_mean_i, p_std^2)`. A zero std gives a point mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default = "one_broadcast")]
    pub q_mean: Broadcast,
    #[serde(default = "one")]
    pub q_std: f64,
    #[serde(default = "zero_broadcast")]
    pub p_mean: Broadcast,
    #[serde(default = "one")]
    pub p_std: f64,
}

fn one() -> f64 {
    1.0
}
fn one_broadcast() -> Broadcast {
    Broadcast::Scalar(1.0)
}
fn zero_broadcast() -> Broadcast {
    Broadcast::Scalar(0.0)
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            q_mean: one_broadcast(),
            q_std: 1.0,
            p_mean: zero_broadcast(),
            p_std: 1.0,
        }
    }
}

impl InitSpec {
    /// Point mass at `(q, p)`.
    pub fn dirac(q: f64, p: f64) -> Self {
        Self {
            q_mean: Broadcast::Scalar(q),
            q_std: 0.0,
            p_mean: Broadcast::Scalar(p),
            p_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    W2Gaussian,
    Chi2Hist,
    MeanError,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::W2Gaussian => "w2_gaussian",
            Metric::Chi2Hist => "chi2_hist",
            Metric::MeanError => "mean_error",
        }
    }
}

/// Which coordinates the metric looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    #[default]
    Position,
    /// `(q, p)` against `target x N(0, I)`.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    #[default]
    ClosedForm,
    /// Long run of a separate sampler; its final law is the reference.
    BenchmarkRun {
        sampler: SamplerConfig,
        steps: u64,
        #[serde(default)]
        chains: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotStyle {
    Linear,
    #[default]
    SemilogY,
    LogLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub potential: PotentialSpec,
    pub sampler: Vec<SamplerConfig>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    /// Number of steps per configuration; exclusive with `horizon`.
    #[serde(default)]
    pub steps: Option<u64>,
    /// Time horizon `T`; each configuration runs `round(T / h)` steps.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub marginal: Marginal,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub hist_range: Option<[f64; 2]>,
    #[serde(default)]
    pub plot: PlotStyle,
}

fn default_chains() -> usize {
    DEFAULT_CHAINS
}
fn default_record_every() -> u64 {
    1
}
fn default_bins() -> usize {
    DEFAULT_BINS
}

impl ExperimentSpec {
    /// Minimal spec: one potential, one sampler, everything else defaulted.
    pub fn new(potential: PotentialSpec, sampler: Vec<SamplerConfig>) -> Self {
        Self {
            name: None,
            potential,
            sampler,
            chains: DEFAULT_CHAINS,
            steps: None,
            horizon: None,
            record_every: 1,
            seed: 0,
            metric: Metric::default(),
            reference: ReferenceSpec::default(),
            init: InitSpec::default(),
            marginal: Marginal::default(),
            bins: DEFAULT_BINS,
            hist_range: None,
            plot: PlotStyle::default(),
        }
    }

    /// Steps run for configuration `i`.
    pub fn steps_for(&self, i: usize) -> u64 {
        match (self.steps, self.horizon) {
            (Some(s), _) => s,
            (None, Some(t)) => (t / self.sampler[i].step).round().max(1.0) as u64,
            (None, None) => 0,
        }
    }

    /// Checks every field; messages carry the JSON path of the offending
    /// value.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let model = self
            .potential
            .build()
            .map_err(|e| cfg(format!("potential: {e}")))?;
        let d = model.dim();
        if self.sampler.is_empty() {
            return Err(cfg("sampler must list at least one configuration"));
        }
        for (i, s) in self.sampler.iter().enumerate() {
            check_sampler(s, &format!("sampler[{i}]"))?;
            if self.marginal == Marginal::Joint && s.kind == SamplerKind::Ula {
                return Err(cfg(format!("sampler[{i}].kind ula has no momentum; marginal must be position")));
            }
        }
        if self.chains < 1 {
            return Err(cfg("chains must be >= 1"));
        }
        if self.metric != Metric::MeanError && self.chains < 2 {
            return Err(cfg("chains must be >= 2 for this metric"));
        }
        match (self.steps, self.horizon) {
            (Some(_), Some(_)) => return Err(cfg("only one of steps and horizon may be given")),
            (None, None) => return Err(cfg("one of steps or horizon is required")),
            (Some(0), None) => return Err(cfg("steps must be >= 1")),
            (None, Some(t)) if !(t > 0.0 && t.is_finite()) => {
                return Err(cfg("horizon must be > 0"));
            }
            _ => {}
        }
        if self.record_every < 1 {
            return Err(cfg("record_every must be >= 1"));
        }
        for i in 0..self.sampler.len() {
            if self.record_every > self.steps_for(i) {
                return Err(cfg(format!(
                    "record_every must be <= steps ({} for sampler[{i}])",
                    self.steps_for(i)
                )));
            }
        }
        if self.init.q_mean.expand(d).is_none() {
            return Err(cfg(format!("init.q_mean must be a number or have length {d}")));
        }
        if self.init.p_mean.expand(d).is_none() {
            return Err(cfg(format!("init.p_mean must be a number or have length {d}")));
        }
        if !(self.init.q_std >= 0.0) {
            return Err(cfg("init.q_std must be >= 0"));
        }
        if !(self.init.p_std >= 0.0) {
            return Err(cfg("init.p_std must be >= 0"));
        }
        if self.metric == Metric::Chi2Hist {
            if d != 1 {
                return Err(cfg(format!("metric chi2_hist needs a 1-dimensional potential (got d = {d})")));
            }
            if self.marginal == Marginal::Joint {
                return Err(cfg("metric chi2_hist supports marginal position only"));
            }
        }
        if self.bins < 2 {
            return Err(cfg("bins must be >= 2"));
        }
        if let Some([lo, hi]) = self.hist_range {
            if !(hi > lo && lo.is_finite() && hi.is_finite()) {
                return Err(cfg("hist_range must be [lo, hi] with lo < hi"));
            }
        }
        if let ReferenceSpec::BenchmarkRun { sampler, steps, chains } = &self.reference {
            check_sampler(sampler, "reference.sampler")?;
            if *steps < 1 {
                return Err(cfg("reference.steps must be >= 1"));
            }
            if let Some(c) = chains {
                if *c < 2 {
                    return Err(cfg("reference.chains must be >= 2"));
                }
            }
        }
        Ok(())
    }
}

fn cfg(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn check_sampler(s: &SamplerConfig, path: &str) -> Result<(), HarnessError> {
    s.validate().map_err(|e| match e {
        SamplerError::InvalidParameter { name, reason, .. } => cfg(format!("{path}.{name} {reason}")),
        other => cfg(format!("{path}: {other}")),
    })
}

/// Step size used when a sampler entry omits `step`. These are the step
/// sizes of the reference decay runs on the built-in targets, which sit near
/// the stability limit of the underdamped baseline.
pub fn default_step(potential: &PotentialSpec) -> f64 {
    let param = |k: &str| potential.params.get(k).copied();
    match potential.name.as_str() {
        "quadratic_iso" => 2.0,
        "quadratic_aniso" if param("m") == Some(10.0) && param("kappa") == Some(10.0) => 2.5,
        "quadratic_aniso" => 0.2,
        "quartic" => 0.5,
        "perturbed" => 0.001,
        "bimodal" => 0.1,
        "rosenbrock2d" => 0.005,
        _ => 0.1,
    }
}

/// Parses and validates a JSON experiment document. Sampler entries without
/// a `step` receive [`default_step`] for the configured potential.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, HarnessError> {
    let mut doc: serde_json::Value = serde_json::from_str(text).map_err(|e| cfg(format!("invalid JSON: {e}")))?;
    fill_default_steps(&mut doc);
    let spec: ExperimentSpec = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        if path == "." || path.is_empty() {
            cfg(e.inner().to_string())
        } else {
            cfg(format!("{path}: {}", e.inner()))
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

fn fill_default_steps(doc: &mut serde_json::Value) {
    let Some(potential) = doc
        .get("potential")
        .and_then(|p| serde_json::from_value::<PotentialSpec>(p.clone()).ok())
    else {
        return;
    };
    let h = default_step(&potential);
    if let Some(list) = doc.get_mut("sampler").and_then(|s| s.as_array_mut()) {
        for entry in list {
            if let Some(obj) = entry.as_object_mut() {
                obj.entry("step").or_insert(serde_json::json!(h));
            }
        }
    }
}
