//! Grid search for the fewest iterations to reach a mean-error threshold.
//!
//! For every `(alpha, gamma, h)` cell and every seed, an ensemble is run
//! until `|mean(q_k) - E q| <= eps` first holds at some step `k` and keeps
//! holding through step `min(2k + 10, max_iters)`. The cell score is the mean
//! of `k` over seeds; a cell in which any seed never qualifies is excluded.
//! Per alpha, the reported cell is the one with the lowest score, ties going
//! to the earliest cell in grid order.

use std::fmt;

use nalgebra::DVector;

use super::config::{InitSpec, PotentialSpec};
use super::reference::closed_form_reference;
use super::run::Ensemble;
use super::HarnessError;
use crate::potentials::PotentialModel;
use crate::samplers::{Kernel, SamplerConfig};

/// Error growth, relative to the initial error, treated as divergence.
const BLOWUP_FACTOR: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub steps: Vec<f64>,
    pub eps: f64,
}

impl SweepGrid {
    /// The grid used for the coupled log-cosh study.
    pub fn standard() -> Self {
        Self {
            alphas: vec![0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            gammas: vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            steps: vec![5.0, 1.0, 0.5, 0.1, 0.05, 0.01, 0.005],
            eps: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub chains: usize,
    pub seeds: Vec<u64>,
    /// Longest run per seed, including the confirmation window.
    pub max_iters: u64,
    pub init: InitSpec,
    pub workers: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            chains: 1000,
            seeds: (0..10).collect(),
            max_iters: 10_000,
            init: InitSpec::dirac(1.0, 0.0),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Winning `(gamma, h)`, absent when every cell was excluded.
    pub best: Option<(f64, f64)>,
    /// Mean iterations over seeds; infinite when every cell was excluded.
    pub mean_iters: f64,
    pub sd_iters: f64,
    pub per_seed: Vec<u64>,
}

impl fmt::Display for AlphaResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.best {
            Some((g, h)) => write!(
                f,
                "alpha={} gamma={} h={} iters={:.1} sd={:.2}",
                self.alpha, g, h, self.mean_iters, self.sd_iters
            ),
            None => write!(f, "alpha={} iters=inf", self.alpha),
        }
    }
}

/// Outcome of one seed in one cell.
enum SeedRun {
    Hit(u64),
    /// Diverged, never qualified, or exceeded `limit`.
    Miss,
}

struct CellContext<'a> {
    model: &'a PotentialModel,
    target: &'a DVector<f64>,
    opts: &'a SweepOptions,
}

impl CellContext<'_> {
    /// First qualifying `k <= limit`, or `Miss`.
    fn run_seed(&self, kernel: &Kernel, eps: f64, seed: u64, stream: u32, limit: u64) -> Result<SeedRun, HarnessError> {
        let mut ens = Ensemble::new(self.model, &self.opts.init, seed, stream, self.opts.chains)?;
        let err0 = (ens.mean_position() - self.target).norm();
        let blowup = BLOWUP_FACTOR * err0.max(eps);
        let max = self.opts.max_iters;
        let mut candidate: Option<u64> = (err0 <= eps).then_some(0);
        let mut k = 0u64;
        loop {
            if let Some(c) = candidate {
                if k >= (2 * c + 10).min(max) {
                    return Ok(SeedRun::Hit(c));
                }
            } else if k >= limit.min(max) {
                return Ok(SeedRun::Miss);
            }
            if ens.advance(kernel, self.model, 1).is_some() {
                return Ok(SeedRun::Miss);
            }
            k += 1;
            let err = (ens.mean_position() - self.target).norm();
            if !(err < blowup) {
                return Ok(SeedRun::Miss);
            }
            if err <= eps {
                candidate.get_or_insert(k);
            } else {
                candidate = None;
            }
        }
    }
}

/// Stream id of a cell, a function of its parameters only so that a cell
/// sees the same noise in any grid containing it.
fn cell_stream(alpha: f64, gamma: f64, h: f64) -> u32 {
    let mut x: u64 = 0xcbf2_9ce4_8422_2325;
    for v in [alpha, gamma, h] {
        for b in v.to_bits().to_le_bytes() {
            x = (x ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
        }
    }
    (x ^ (x >> 32)) as u32
}

/// Runs the sweep for `potential` against its closed-form mean.
pub fn sweep_iteration_complexity(
    potential: &PotentialSpec,
    grid: &SweepGrid,
    opts: &SweepOptions,
) -> Result<Vec<AlphaResult>, HarnessError> {
    if grid.alphas.is_empty() || grid.gammas.is_empty() || grid.steps.is_empty() {
        return Err(HarnessError::Config("sweep grids must be nonempty".into()));
    }
    if !(grid.eps > 0.0) {
        return Err(HarnessError::Config(format!("sweep eps must be > 0, got {}", grid.eps)));
    }
    if opts.seeds.is_empty() || opts.chains == 0 {
        return Err(HarnessError::Config("sweep needs at least one seed and one chain".into()));
    }
    match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarnessError::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| sweep_inner(potential, grid, opts)),
        None => sweep_inner(potential, grid, opts),
    }
}

fn sweep_inner(potential: &PotentialSpec, grid: &SweepGrid, opts: &SweepOptions) -> Result<Vec<AlphaResult>, HarnessError> {
    let model = potential.build()?;
    let target = closed_form_reference(&model)?.position.mean;
    let ctx = CellContext {
        model: &model,
        target: &target,
        opts,
    };
    let n_seeds = opts.seeds.len() as u64;
    let mut out = Vec::with_capacity(grid.alphas.len());
    for &alpha in &grid.alphas {
        // best total over seeds; a cell can only win with a strictly smaller total
        let mut best: Option<(u64, (f64, f64), Vec<u64>)> = None;
        for &gamma in &grid.gammas {
            for &h in &grid.steps {
                let stream = cell_stream(alpha, gamma, h);
                let kernel = Kernel::new(SamplerConfig::hfhr(alpha, gamma, h))?;
                let budget = best.as_ref().map(|b| b.0);
                let mut total = 0u64;
                let mut counts = Vec::with_capacity(opts.seeds.len());
                let mut excluded = false;
                for &seed in &opts.seeds {
                    // any count beyond this cannot beat the incumbent
                    let limit = match budget {
                        Some(b) if b <= total => {
                            excluded = true;
                            break;
                        }
                        Some(b) => b - total - 1,
                        None => u64::MAX,
                    };
                    match ctx.run_seed(&kernel, grid.eps, seed, stream, limit)? {
                        SeedRun::Hit(k) => {
                            total += k;
                            counts.push(k);
                        }
                        SeedRun::Miss => {
                            excluded = true;
                            break;
                        }
                    }
                }
                if !excluded && budget.is_none_or(|b| total < b) {
                    best = Some((total, (gamma, h), counts));
                }
            }
        }
        out.push(match best {
            Some((total, cell_best, counts)) => {
                let mean = total as f64 / n_seeds as f64;
                let var = if counts.len() > 1 {
                    counts.iter().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64
                } else {
                    0.0
                };
                AlphaResult {
                    alpha,
                    best: Some(cell_best),
                    mean_iters: mean,
                    sd_iters: var.sqrt(),
                    per_seed: counts,
                }
            }
            None => AlphaResult {
                alpha,
                best: None,
                mean_iters: f64::INFINITY,
                sd_iters: f64::NAN,
                per_seed: Vec::new(),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn gaussian_1d() -> PotentialSpec {
        PotentialSpec {
            name: "quadratic_iso".into(),
            params: BTreeMap::new(),
        }
    }

    fn quick_opts() -> SweepOptions {
        SweepOptions {
            chains: 100,
            seeds: vec![0, 1],
            max_iters: 2000,
            ..Default::default()
        }
    }

    #[test]
    fn threshold_above_initial_error_needs_zero_iterations() {
        let grid = SweepGrid {
            alphas: vec![0.0, 1.0],
            gammas: vec![2.0],
            steps: vec![0.1],
            eps: 2.0,
        };
        let res = sweep_iteration_complexity(&gaussian_1d(), &grid, &quick_opts()).unwrap();
        for r in res {
            assert_eq!(r.mean_iters, 0.0);
            assert_eq!(r.per_seed, vec![0, 0]);
        }
    }

    #[test]
    fn divergent_only_cell_reports_infinity() {
        let grid = SweepGrid {
            alphas: vec![1.0],
            gammas: vec![2.0],
            steps: vec![50.0],
            eps: 1e-3,
        };
        let res = sweep_iteration_complexity(&gaussian_1d(), &grid, &quick_opts()).unwrap();
        assert!(res[0].mean_iters.is_infinite());
        assert!(res[0].best.is_none());
    }

    #[test]
    fn pruning_does_not_change_the_winner() {
        let grid = SweepGrid {
            alphas: vec![0.5],
            gammas: vec![1.0, 2.0, 5.0],
            steps: vec![0.5, 0.1],
            eps: 0.1,
        };
        let opts = quick_opts();
        let res = sweep_iteration_complexity(&gaussian_1d(), &grid, &opts).unwrap();
        // exhaustive search over single-cell grids
        let mut best: Option<(f64, (f64, f64))> = None;
        for &g in &grid.gammas {
            for &h in &grid.steps {
                let one = SweepGrid {
                    gammas: vec![g],
                    steps: vec![h],
                    ..grid.clone()
                };
                let r = sweep_iteration_complexity(&gaussian_1d(), &one, &opts).unwrap();
                if best.is_none_or(|b| r[0].mean_iters < b.0) {
                    best = Some((r[0].mean_iters, (g, h)));
                }
            }
        }
        let (score, cell) = best.unwrap();
        assert!(score.is_finite());
        assert_eq!(res[0].mean_iters, score);
        assert_eq!(res[0].best, Some(cell));
    }

    #[test]
    fn rejects_empty_grid_and_bad_eps() {
        let mut g = SweepGrid::standard();
        g.eps = 0.0;
        assert!(sweep_iteration_complexity(&gaussian_1d(), &g, &quick_opts()).is_err());
        g.eps = 0.1;
        g.alphas.clear();
        assert!(sweep_iteration_complexity(&gaussian_1d(), &g, &quick_opts()).is_err());
    }
}
