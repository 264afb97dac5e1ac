use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hfhr::analysis::{
    em_modulus_formula, hfhr_matched_modulus_parameters, rate_bound_chi2_convex, rate_bound_chi2_poincare, rate_bound_w2,
    step_thresholds, theory_constants, uld_optimal_discount,
};
use hfhr::harness::{
    config::default_step, parse_config, run_experiment_with, sweep_iteration_complexity, write_csv, write_svg_plot,
    HarnessError, PotentialSpec, RunOptions, SweepGrid, SweepOptions,
};
use hfhr::samplers::{ChainState, Kernel, RandomSource, SamplerConfig, SamplerKind, Workspace};

const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "hfhr", version, about = "Hessian-free high-resolution Langevin sampling and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain and stream its states as CSV.
    Sample {
        #[arg(long, default_value = "quadratic_iso")]
        potential: String,
        /// Potential parameter as key=value; repeatable.
        #[arg(long = "param", value_parser = parse_kv)]
        params: Vec<(String, f64)>,
        #[arg(long, default_value = "hfhr_strang", value_parser = parse_kind)]
        kind: SamplerKind,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        /// Step size; defaults to the potential's standard step.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        /// Print every n-th state.
        #[arg(long, default_value_t = 1)]
        every: u64,
        /// Initial position, broadcast to every coordinate.
        #[arg(long, default_value_t = 1.0)]
        q0: f64,
        #[arg(long, default_value_t = 0.0)]
        p0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write to this directory as sample.csv instead of stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a JSON experiment and write CSV and/or SVG output.
    Experiment {
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
    },
    /// Print constants and rate bounds for smoothness `l`, convexity `m`.
    Theory {
        #[arg(long = "l")]
        l: f64,
        #[arg(long = "m")]
        m: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        gamma: f64,
        /// Poincare constant of the target.
        #[arg(long)]
        lambda_pi: Option<f64>,
        /// Linear-growth constant of the gradient of the Laplacian, for step thresholds.
        #[arg(long)]
        g: Option<f64>,
    },
    /// Print spectral tables for the mean process of the Euler scheme.
    Spectral {
        /// Ratio h / eps for the two-block comparison.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
    },
    /// Grid search for the fewest iterations to a mean-error threshold.
    Sweep {
        #[arg(long, default_value = "coupled_logcosh")]
        potential: String,
        #[arg(long = "param", value_parser = parse_kv)]
        params: Vec<(String, f64)>,
        #[arg(long, default_value_t = 1000)]
        chains: usize,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("'{v}' is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_kind(s: &str) -> Result<SamplerKind, String> {
    SamplerKind::ALL
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = SamplerKind::ALL.iter().map(|k| k.as_str()).collect();
            format!("unknown sampler '{s}'; valid kinds are: {}", names.join(", "))
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample {
            potential,
            params,
            kind,
            alpha,
            gamma,
            step,
            steps,
            every,
            q0,
            p0,
            seed,
            out_dir,
        } => cmd_sample(
            PotentialSpec {
                name: potential,
                params: params.into_iter().collect(),
            },
            kind,
            alpha,
            gamma,
            step,
            steps,
            every.max(1),
            (q0, p0),
            seed,
            out_dir.as_deref(),
        ),
        Command::Experiment {
            config,
            seed,
            workers,
            out_dir,
            format,
        } => cmd_experiment(&config, seed, workers, &out_dir, format),
        Command::Theory {
            l,
            m,
            alpha,
            gamma,
            lambda_pi,
            g,
        } => cmd_theory(l, m, alpha, gamma, lambda_pi, g),
        Command::Spectral { c } => cmd_spectral(c),
        Command::Sweep {
            potential,
            params,
            chains,
            seeds,
            seed,
            eps,
            max_iters,
            workers,
        } => {
            let grid = SweepGrid {
                eps,
                ..SweepGrid::standard()
            };
            let opts = SweepOptions {
                chains,
                seeds: (seed..seed + seeds).collect(),
                max_iters,
                workers,
                ..SweepOptions::default()
            };
            cmd_sweep(
                PotentialSpec {
                    name: potential,
                    params: params.into_iter().collect(),
                },
                &grid,
                &opts,
            )
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    spec: PotentialSpec,
    kind: SamplerKind,
    alpha: f64,
    gamma: f64,
    step: Option<f64>,
    steps: u64,
    every: u64,
    (q0, p0): (f64, f64),
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<ExitCode, HarnessError> {
    let model = spec.build()?;
    let h = step.unwrap_or_else(|| default_step(&spec));
    let kernel = Kernel::new(SamplerConfig::new(kind, alpha, gamma, h))?;
    let d = model.dim();
    let mut state = ChainState {
        q: vec![q0; d],
        p: vec![p0; d],
    };
    let mut rng = RandomSource::for_chain(seed, 0, 0);
    let mut ws = Workspace::new(d);

    let sink: Box<dyn Write> = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            let path = dir.join("sample.csv");
            Box::new(fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    let io_err = |e| HarnessError::io("<output>", e);
    let header: Vec<String> = (0..d)
        .map(|i| format!("q{i}"))
        .chain((0..d).map(|i| format!("p{i}")))
        .collect();
    writeln!(out, "step,{}", header.join(",")).map_err(io_err)?;
    let write_state = |out: &mut BufWriter<Box<dyn Write>>, k: u64, s: &ChainState| {
        let vals: Vec<String> = s.q.iter().chain(&s.p).map(|v| v.to_string()).collect();
        writeln!(out, "{k},{}", vals.join(","))
    };
    write_state(&mut out, 0, &state).map_err(io_err)?;
    for k in 1..=steps {
        kernel.step(&mut state, &model, &mut rng, &mut ws);
        if !state.is_finite() {
            out.flush().map_err(io_err)?;
            eprintln!("chain diverged at step {k}");
            return Ok(ExitCode::from(EXIT_ALL_DIVERGED));
        }
        if k % every == 0 || k == steps {
            write_state(&mut out, k, &state).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_experiment(
    config: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: &Path,
    format: Format,
) -> Result<ExitCode, HarnessError> {
    let text = fs::read_to_string(config).map_err(|e| HarnessError::Config(format!("{}: {e}", config.display())))?;
    let mut spec = parse_config(&text)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let opts = RunOptions {
        workers,
        cache_dir: Some(out_dir.join(".cache")),
    };
    let output = run_experiment_with(&spec, &opts)?;
    let stem = spec.name.clone().unwrap_or_else(|| {
        config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into())
    });
    if matches!(format, Format::Csv | Format::Both) {
        let path = out_dir.join(format!("{stem}.csv"));
        write_csv(&output.series, &path)?;
        eprintln!("wrote {}", path.display());
    }
    if matches!(format, Format::Svg | Format::Both) {
        let path = out_dir.join(format!("{stem}.svg"));
        write_svg_plot(&output.series, spec.plot, &path)?;
        eprintln!("wrote {}", path.display());
    }
    for c in &output.configs {
        match c.diverged_at {
            Some(k) => eprintln!("{}: diverged at step {k}", c.id),
            None => eprintln!("{}: {} steps, {} gradient evaluations", c.id, c.steps, c.grad_evals),
        }
    }
    Ok(if output.all_diverged() {
        ExitCode::from(EXIT_ALL_DIVERGED)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_theory(
    l: f64,
    m: f64,
    alpha: f64,
    gamma: f64,
    lambda_pi: Option<f64>,
    g: Option<f64>,
) -> Result<ExitCode, HarnessError> {
    let tc = theory_constants(l, m, alpha, gamma)?;
    println!("L' = {}", tc.l_prime);
    println!("sigma_max = {}", tc.sigma_max);
    println!("sigma_min = {}", tc.sigma_min);
    println!("kappa' = {}", tc.kappa_prime);
    println!("lambda' = {}", tc.lambda_prime);
    println!("contraction available = {}", tc.contraction_available);
    if let Some(lp) = lambda_pi {
        println!("chi2 rate (Poincare) = {}", rate_bound_chi2_poincare(alpha, gamma, lp)?);
    }
    let convex = rate_bound_chi2_convex(alpha, gamma, m, l);
    println!(
        "chi2 rate (strongly convex) = {} [gamma condition {}, alpha condition {}]",
        convex.rate, convex.gamma_condition, convex.alpha_condition
    );
    let w2 = rate_bound_w2(alpha, gamma, m, l)?;
    println!(
        "W2 rate = {} with prefactor {} [assumptions hold: {}]",
        w2.rate,
        w2.prefactor,
        w2.assumptions_hold()
    );
    if let Some(g) = g {
        let t = step_thresholds(l, m, g, alpha, gamma)?;
        println!("step thresholds: h0 = {} h1 = {} h2 = {} h3 = {}", t.h0, t.h1, t.h2, t.h3);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_spectral(c: f64) -> Result<ExitCode, HarnessError> {
    println!("# nilpotent Euler parameters: alpha = gamma + 2, h = 1 / (1 + gamma)");
    println!("gamma,alpha,h,modulus");
    for gamma in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let (alpha, h) = (gamma + 2.0, 1.0 / (1.0 + gamma));
        let t = hfhr::analysis::em_mean_map_1d(alpha, gamma, h);
        let rho = hfhr::analysis::spectral_radius(&nalgebra::DMatrix::from_iterator(2, 2, t.iter().copied()))?;
        println!("{gamma},{alpha},{h},{rho:e}");
    }
    println!();
    println!("# Euler mean-map modulus on the unit quadratic");
    println!("alpha,gamma,h,modulus");
    for (alpha, gamma) in [(0.0, 2.0), (0.5, 2.0), (1.0, 2.0), (2.0, 2.0)] {
        for h in [0.05, 0.1, 0.2, 0.4] {
            println!("{alpha},{gamma},{h},{}", em_modulus_formula(alpha, gamma, h));
        }
    }
    println!();
    println!("# two-block comparison, h = c * eps with c = {c}");
    println!("eps,uld_h,uld_gamma,uld_discount,hfhr_alpha,hfhr_gamma,hfhr_h,hfhr_discount");
    for eps in [0.01, 0.05, 0.1, 0.2, 0.4] {
        let u = uld_optimal_discount(eps)?;
        let hf = hfhr_matched_modulus_parameters(eps, c)?;
        println!(
            "{eps},{},{},{},{},{},{},{}",
            u.h, u.gamma, u.discount, hf.alpha, hf.gamma, hf.h, hf.discount
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(spec: PotentialSpec, grid: &SweepGrid, opts: &SweepOptions) -> Result<ExitCode, HarnessError> {
    // fail fast on a bad potential before the long run starts
    spec.build()?;
    let rows = sweep_iteration_complexity(&spec, grid, opts)?;
    println!("alpha,gamma,h,mean_iters,sd_iters");
    for r in &rows {
        match r.best {
            Some((g, h)) => println!("{},{g},{h},{},{}", r.alpha, r.mean_iters, r.sd_iters),
            None => println!("{},,,inf,", r.alpha),
        }
    }
    Ok(if rows.iter().all(|r| r.best.is_none()) {
        ExitCode::from(EXIT_ALL_DIVERGED)
    } else {
        ExitCode::SUCCESS
    })
}
