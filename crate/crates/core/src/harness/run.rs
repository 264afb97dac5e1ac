//! Seeded, parallel execution of an [`ExperimentSpec`].
//!
//! Every chain owns a random stream keyed on `(seed, config index, chain
//! index)`, so results do not depend on the number of worker threads. All
//! reductions over chains are performed on the gathered state matrix in
//! chain order.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{ExperimentSpec, InitSpec, Marginal, Metric, ReferenceSpec};
use super::reference::{benchmark_reference, closed_form_reference, ReferenceLaw};
use super::HarnessError;
use crate::gaussian::GaussianSummary;
use crate::metrics::{
    chi2_from_masses, empirical_moments_rows, w2_gaussian, HistogramDensity, DEFAULT_RANGE_SDS,
};
use crate::potentials::PotentialModel;
use crate::samplers::{ChainState, Kernel, RandomSource, SamplerConfig, SamplerKind, Workspace};

/// Flag value on the terminal row of a diverged configuration.
pub const DIVERGED_FLAG: &str = "diverged";

/// Chains advanced per parallel task.
const CHAIN_BLOCK: usize = 64;

struct Chain {
    state: ChainState,
    rng: RandomSource,
    ws: Workspace,
}

/// A set of independent chains sharing one kernel.
pub struct Ensemble {
    chains: Vec<Chain>,
    dim: usize,
}

impl Ensemble {
    /// Draws `count` initial states from `init`; chain `i` uses stream
    /// `(seed, stream, i)` for its initial draw and all later noise.
    pub fn new(
        model: &PotentialModel,
        init: &InitSpec,
        seed: u64,
        stream: u32,
        count: usize,
    ) -> Result<Self, HarnessError> {
        let d = model.dim();
        let qm = init
            .q_mean
            .expand(d)
            .ok_or_else(|| HarnessError::Config(format!("init.q_mean must have length {d}")))?;
        let pm = init
            .p_mean
            .expand(d)
            .ok_or_else(|| HarnessError::Config(format!("init.p_mean must have length {d}")))?;
        let chains = (0..count)
            .map(|i| {
                let mut rng = RandomSource::for_chain(seed, stream, i as u32);
                let q = qm.iter().map(|m| m + init.q_std * rng.standard_normal()).collect();
                let p = pm.iter().map(|m| m + init.p_std * rng.standard_normal()).collect();
                Chain {
                    state: ChainState { q, p },
                    rng,
                    ws: Workspace::new(d),
                }
            })
            .collect();
        Ok(Self { chains, dim: d })
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    /// Advances every chain `steps` steps. Returns the earliest step (counted
    /// from this call) at which any chain became non-finite.
    pub fn advance(&mut self, kernel: &Kernel, model: &PotentialModel, steps: u64) -> Option<u64> {
        self.chains
            .par_chunks_mut(CHAIN_BLOCK)
            .map(|block| {
                let mut first: Option<u64> = None;
                for c in block.iter_mut() {
                    for k in 1..=steps {
                        kernel.step(&mut c.state, model, &mut c.rng, &mut c.ws);
                        if !c.state.is_finite() {
                            first = Some(first.map_or(k, |f| f.min(k)));
                            break;
                        }
                    }
                }
                first
            })
            .reduce(|| None, |a, b| match (a, b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, None) => x,
                (None, y) => y,
            })
    }

    /// Positions as a `chains x d` matrix.
    pub fn positions(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.chains.len(), self.dim, |i, j| self.chains[i].state.q[j])
    }

    /// `(q, p)` as a `chains x 2d` matrix.
    pub fn joint(&self) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(self.chains.len(), 2 * d, |i, j| {
            let s = &self.chains[i].state;
            if j < d {
                s.q[j]
            } else {
                s.p[j - d]
            }
        })
    }

    /// Mean position, accumulated in chain order.
    pub fn mean_position(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for c in &self.chains {
            for (acc, v) in m.iter_mut().zip(&c.state.q) {
                *acc += v;
            }
        }
        m / self.chains.len() as f64
    }

    pub fn states(&self) -> impl Iterator<Item = &ChainState> {
        self.chains.iter().map(|c| &c.state)
    }

    pub fn grad_evals(&self) -> u64 {
        self.chains.iter().map(|c| c.ws.grad_evals()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub config_id: String,
    pub step: u64,
    pub time: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub flag: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultSeries {
    pub rows: Vec<ResultRow>,
}

impl ResultSeries {
    /// Config ids in order of first appearance.
    pub fn config_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.rows {
            if !ids.contains(&r.config_id) {
                ids.push(r.config_id.clone());
            }
        }
        ids
    }

    pub fn rows_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.config_id == id)
    }
}

#[derive(Debug, Clone)]
pub struct ConfigSummary {
    pub id: String,
    pub config: SamplerConfig,
    pub steps: u64,
    /// Step at which the first chain became non-finite.
    pub diverged_at: Option<u64>,
    pub grad_evals: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub series: ResultSeries,
    pub configs: Vec<ConfigSummary>,
}

impl ExperimentOutput {
    pub fn all_diverged(&self) -> bool {
        self.configs.iter().all(|c| c.diverged_at.is_some())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Directory for cached benchmark references.
    pub cache_dir: Option<PathBuf>,
}

fn trim(v: f64) -> String {
    format!("{v}")
}

/// Human-readable id for a sampler configuration.
pub fn config_id(c: &SamplerConfig) -> String {
    match c.kind {
        SamplerKind::Ula => format!("ula:h={}", trim(c.step)),
        SamplerKind::UldKlmc => format!("uld_klmc:g={}:h={}", trim(c.gamma), trim(c.step)),
        k => format!("{k}:a={}:g={}:h={}", trim(c.alpha), trim(c.gamma), trim(c.step)),
    }
}

fn unique_ids(configs: &[SamplerConfig]) -> Vec<String> {
    let base: Vec<String> = configs.iter().map(config_id).collect();
    base.iter()
        .enumerate()
        .map(|(i, id)| {
            if base.iter().filter(|b| *b == id).count() > 1 {
                format!("{id}#{i}")
            } else {
                id.clone()
            }
        })
        .collect()
}

struct MetricEval {
    metric: Metric,
    marginal: Marginal,
    target: GaussianSummary,
    hist: Option<(f64, f64, usize, Vec<f64>)>,
}

impl MetricEval {
    fn new(spec: &ExperimentSpec, reference: ReferenceLaw) -> Result<Self, HarnessError> {
        let target = match spec.marginal {
            Marginal::Position => reference.position.clone(),
            Marginal::Joint => reference.joint(),
        };
        let hist = if spec.metric == Metric::Chi2Hist {
            let (lo, hi) = match spec.hist_range {
                Some([lo, hi]) => (lo, hi),
                None => pooled_range(&reference, &spec.init),
            };
            let masses = reference.bin_masses(lo, hi, spec.bins)?;
            Some((lo, hi, spec.bins, masses))
        } else {
            None
        };
        Ok(Self {
            metric: spec.metric,
            marginal: spec.marginal,
            target,
            hist,
        })
    }

    fn eval(&self, ens: &Ensemble) -> Result<(f64, Option<f64>), HarnessError> {
        match self.metric {
            Metric::W2Gaussian => {
                let rows = match self.marginal {
                    Marginal::Position => ens.positions(),
                    Marginal::Joint => ens.joint(),
                };
                let emp = empirical_moments_rows(&rows)?;
                Ok((w2_gaussian(&emp, &self.target)?, None))
            }
            Metric::MeanError => {
                let n = ens.len() as f64;
                let mean = match self.marginal {
                    Marginal::Position => ens.mean_position(),
                    Marginal::Joint => {
                        let rows = ens.joint();
                        rows.row_mean().transpose()
                    }
                };
                let diff = &mean - &self.target.mean;
                let value = diff.norm();
                // standard error of the norm along the error direction
                let rows = match self.marginal {
                    Marginal::Position => ens.positions(),
                    Marginal::Joint => ens.joint(),
                };
                let dir = if value > 0.0 {
                    &diff / value
                } else {
                    DVector::from_element(diff.len(), 1.0 / (diff.len() as f64).sqrt())
                };
                let proj: Vec<f64> = rows.row_iter().map(|r| r.transpose().dot(&dir)).collect();
                let pm = proj.iter().sum::<f64>() / n;
                let var = if ens.len() > 1 {
                    proj.iter().map(|x| (x - pm) * (x - pm)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                Ok((value, Some((var / n).sqrt())))
            }
            Metric::Chi2Hist => {
                let (lo, hi, bins, masses) = self.hist.as_ref().expect("histogram prepared");
                let samples: Vec<f64> = ens.states().map(|s| s.q[0]).collect();
                let h = HistogramDensity::from_samples(&samples, *lo, *hi, *bins)?;
                Ok((chi2_from_masses(&h, masses)?, None))
            }
        }
    }
}

/// Histogram range: mean +/- 6 sd of the equal mixture of the reference and
/// the initial law.
fn pooled_range(reference: &ReferenceLaw, init: &InitSpec) -> (f64, f64) {
    let (rm, rv) = (reference.position.mean[0], reference.position.cov[(0, 0)]);
    let im = init.q_mean.expand(1).map(|v| v[0]).unwrap_or(0.0);
    let iv = init.q_std * init.q_std;
    let m = 0.5 * (rm + im);
    let v = 0.5 * (rv + rm * rm) + 0.5 * (iv + im * im) - m * m;
    let sd = v.max(1e-24).sqrt();
    (m - DEFAULT_RANGE_SDS * sd, m + DEFAULT_RANGE_SDS * sd)
}

/// Runs the experiment on the global thread pool without a cache.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    run_experiment_with(spec, &RunOptions::default())
}

pub fn run_experiment_with(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    match opts.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::Config(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| run_inner(spec, opts))
        }
        None => run_inner(spec, opts),
    }
}

fn run_inner(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentOutput, HarnessError> {
    let model = spec.potential.build()?;
    let reference = match &spec.reference {
        ReferenceSpec::ClosedForm => closed_form_reference(&model)?,
        ReferenceSpec::BenchmarkRun { sampler, steps, chains } => benchmark_reference(
            &spec.potential,
            &spec.init,
            sampler,
            *steps,
            chains.unwrap_or(spec.chains),
            spec.seed,
            opts.cache_dir.as_deref(),
        )?,
    };
    let eval = MetricEval::new(spec, reference)?;
    let ids = unique_ids(&spec.sampler);
    let metric_name = spec.metric.as_str().to_string();

    let mut series = ResultSeries::default();
    let mut configs = Vec::with_capacity(spec.sampler.len());
    for (ci, cfg) in spec.sampler.iter().enumerate() {
        let kernel = Kernel::new(*cfg)?;
        let steps = spec.steps_for(ci);
        let mut ens = Ensemble::new(&model, &spec.init, spec.seed, ci as u32, spec.chains)?;
        let row = |step: u64, value: f64, stderr: Option<f64>, flag: &str| ResultRow {
            config_id: ids[ci].clone(),
            step,
            time: step as f64 * cfg.step,
            metric: metric_name.clone(),
            value,
            stderr,
            flag: flag.to_string(),
        };
        let (v0, s0) = eval.eval(&ens)?;
        series.rows.push(row(0, v0, s0, ""));
        let mut done = 0u64;
        let mut diverged_at = None;
        while done < steps {
            let chunk = spec.record_every.min(steps - done);
            if let Some(k) = ens.advance(&kernel, &model, chunk) {
                let at = done + k;
                diverged_at = Some(at);
                series.rows.push(row(at, f64::NAN, None, DIVERGED_FLAG));
                break;
            }
            done += chunk;
            let (v, s) = eval.eval(&ens)?;
            series.rows.push(row(done, v, s, ""));
        }
        configs.push(ConfigSummary {
            id: ids[ci].clone(),
            config: *cfg,
            steps,
            diverged_at,
            grad_evals: ens.grad_evals(),
        });
    }
    Ok(ExperimentOutput { series, configs })
}
