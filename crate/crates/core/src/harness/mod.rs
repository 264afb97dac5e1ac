//! Experiment harness: configuration, reference laws, seeded ensemble runs,
//! iteration-complexity sweeps and CSV/SVG output.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::gaussian::GaussianError;
use crate::metrics::MetricsError;
use crate::potentials::PotentialError;
use crate::samplers::SamplerError;

pub mod config;
pub mod output;
pub mod reference;
pub mod run;
pub mod sweep;

pub use config::{
    parse_config, Broadcast, ExperimentSpec, InitSpec, Marginal, Metric, PlotStyle, PotentialSpec, ReferenceSpec,
};
pub use output::{parse_csv, write_csv, write_svg_plot, CSV_HEADER};
pub use reference::{benchmark_cache_key, benchmark_reference, closed_form_reference, ReferenceLaw};
pub use run::{
    config_id, run_experiment, run_experiment_with, ConfigSummary, Ensemble, ExperimentOutput, ResultRow,
    ResultSeries, RunOptions, DIVERGED_FLAG,
};
pub use sweep::{sweep_iteration_complexity, AlphaResult, SweepGrid, SweepOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("benchmark reference run diverged at step {step}")]
    BenchmarkDiverged { step: u64 },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("plot: {0}")]
    Plot(String),
}

impl HarnessError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// True for errors caused by user input rather than by the run itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Potential(_) | Self::Sampler(_) | Self::Json(_))
    }
}
