use crate::potentials::PotentialModel;

use super::phi::PhiFlowKernel;
use super::{ChainState, NoiseSource, SamplerConfig, SamplerError, SamplerKind};

/// Scratch buffers for one chain, plus its gradient-call counter.
#[derive(Debug, Clone)]
pub struct Workspace {
    grad: Vec<f64>,
    noise: Vec<f64>,
    grad_evals: u64,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            grad: vec![0.0; dim],
            noise: vec![0.0; 2 * dim],
            grad_evals: 0,
        }
    }

    /// Number of gradient evaluations performed through this workspace.
    pub fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    fn eval_gradient(&mut self, model: &PotentialModel, q: &[f64]) {
        model.gradient(q, &mut self.grad);
        self.grad_evals += 1;
    }
}

/// `(h - (1 - e^{-gamma h}) / gamma) / gamma`, the position coefficient of a
/// frozen gradient over one underdamped step.
pub(crate) fn frozen_position_coeff(gamma: f64, h: f64) -> f64 {
    let x = gamma * h;
    let num = if x < 0.1 {
        // x + expm1(-x) = x^2/2 - x^3/6 + x^4/24 - ...
        let mut sum: f64 = 0.0;
        let mut term = x * x / 2.0;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            k += 1.0;
            term *= -x / k;
        }
        sum
    } else {
        x + (-x).exp_m1()
    };
    num / (gamma * gamma)
}

/// A configured transition kernel with precomputed coefficients.
#[derive(Debug, Clone)]
pub struct Kernel {
    config: SamplerConfig,
    phi: Option<PhiFlowKernel>,
    frozen_q: f64,
}

impl Kernel {
    pub fn new(config: SamplerConfig) -> Result<Self, SamplerError> {
        config.validate()?;
        let (phi, frozen_q) = match config.kind {
            SamplerKind::HfhrStrang => (Some(PhiFlowKernel::new(config.gamma, 0.5 * config.step)?), 0.0),
            SamplerKind::UldKlmc => (
                Some(PhiFlowKernel::new(config.gamma, config.step)?),
                frozen_position_coeff(config.gamma, config.step),
            ),
            SamplerKind::Ula | SamplerKind::HfhrEm => (None, 0.0),
        };
        Ok(Self {
            config,
            phi,
            frozen_q,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// The exact linear-flow kernel used internally (half step for
    /// `hfhr_strang`, full step for `uld_klmc`).
    pub fn phi_kernel(&self) -> Option<&PhiFlowKernel> {
        self.phi.as_ref()
    }

    /// Advances `state` by one step in place.
    pub fn step<N: NoiseSource + ?Sized>(
        &self,
        state: &mut ChainState,
        model: &PotentialModel,
        noise: &mut N,
        ws: &mut Workspace,
    ) {
        let d = state.dim();
        debug_assert_eq!(d, model.dim());
        let h = self.config.step;
        match self.config.kind {
            SamplerKind::HfhrStrang => {
                let phi = self.phi.as_ref().expect("strang kernel has phi");
                noise.fill_standard_normal(&mut ws.noise);
                phi.apply_with(state, &ws.noise);
                psi_tilde_in_place(state, model, self.config.alpha, h, noise, ws);
                noise.fill_standard_normal(&mut ws.noise);
                phi.apply_with(state, &ws.noise);
            }
            SamplerKind::UldKlmc => {
                let phi = self.phi.as_ref().expect("klmc kernel has phi");
                ws.eval_gradient(model, &state.q);
                noise.fill_standard_normal(&mut ws.noise);
                phi.apply_with(state, &ws.noise);
                let cp = phi.position_gain();
                for i in 0..d {
                    let g = ws.grad[i];
                    state.q[i] -= self.frozen_q * g;
                    state.p[i] -= cp * g;
                }
            }
            SamplerKind::Ula => {
                ws.eval_gradient(model, &state.q);
                let eta = &mut ws.noise[..d];
                noise.fill_standard_normal(eta);
                let s = (2.0 * h).sqrt();
                for i in 0..d {
                    state.q[i] += -h * ws.grad[i] + s * eta[i];
                    state.p[i] = 0.0;
                }
            }
            SamplerKind::HfhrEm => {
                let (alpha, gamma) = (self.config.alpha, self.config.gamma);
                ws.eval_gradient(model, &state.q);
                noise.fill_standard_normal(&mut ws.noise);
                let (eta, xi) = ws.noise.split_at(d);
                let sq = (2.0 * alpha * h).sqrt();
                let sp = (2.0 * gamma * h).sqrt();
                for i in 0..d {
                    let (q, p, g) = (state.q[i], state.p[i], ws.grad[i]);
                    state.q[i] = q + (p - alpha * g) * h + sq * eta[i];
                    state.p[i] = p - (gamma * p + g) * h + sp * xi[i];
                }
            }
        }
    }
}

fn psi_tilde_in_place<N: NoiseSource + ?Sized>(
    state: &mut ChainState,
    model: &PotentialModel,
    alpha: f64,
    h: f64,
    noise: &mut N,
    ws: &mut Workspace,
) {
    let d = state.dim();
    ws.eval_gradient(model, &state.q);
    let eta = &mut ws.noise[..d];
    noise.fill_standard_normal(eta);
    if alpha > 0.0 {
        let s = (2.0 * alpha * h).sqrt();
        for i in 0..d {
            state.q[i] += -alpha * h * ws.grad[i] + s * eta[i];
        }
    }
    for i in 0..d {
        state.p[i] -= h * ws.grad[i];
    }
}

fn check_dims(state: &ChainState, model: &PotentialModel) -> Result<(), SamplerError> {
    if state.dim() != model.dim() || state.p.len() != state.q.len() {
        return Err(SamplerError::DimensionMismatch {
            state: state.dim(),
            model: model.dim(),
        });
    }
    Ok(())
}

/// Euler–Maruyama step of the gradient sub-flow:
/// `q <- q - alpha grad f(q) h + sqrt(2 alpha h) eta`, `p <- p - grad f(q) h`,
/// with the gradient evaluated once at the incoming `q`. `d` normals are
/// drawn even when `alpha = 0`.
pub fn psi_tilde_step<N: NoiseSource + ?Sized>(
    state: &mut ChainState,
    model: &PotentialModel,
    alpha: f64,
    h: f64,
    noise: &mut N,
) -> Result<(), SamplerError> {
    if !(h > 0.0) {
        return Err(SamplerError::InvalidParameter {
            name: "step",
            value: h,
            reason: "must be > 0",
        });
    }
    if !(alpha >= 0.0) {
        return Err(SamplerError::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "must be >= 0",
        });
    }
    check_dims(state, model)?;
    let mut ws = Workspace::new(state.dim());
    psi_tilde_in_place(state, model, alpha, h, noise, &mut ws);
    Ok(())
}

fn single_step<N: NoiseSource + ?Sized>(
    expected: SamplerKind,
    state: &mut ChainState,
    model: &PotentialModel,
    config: &SamplerConfig,
    noise: &mut N,
) -> Result<(), SamplerError> {
    if config.kind != expected {
        return Err(SamplerError::WrongKind {
            expected,
            found: config.kind,
        });
    }
    check_dims(state, model)?;
    let kernel = Kernel::new(*config)?;
    let mut ws = Workspace::new(state.dim());
    kernel.step(state, model, noise, &mut ws);
    Ok(())
}

/// One HFHR Strang-splitting step.
pub fn hfhr_step<N: NoiseSource + ?Sized>(
    state: &mut ChainState,
    model: &PotentialModel,
    config: &SamplerConfig,
    noise: &mut N,
) -> Result<(), SamplerError> {
    single_step(SamplerKind::HfhrStrang, state, model, config, noise)
}

/// One first-order KLMC step of underdamped Langevin dynamics.
pub fn uld_step<N: NoiseSource + ?Sized>(
    state: &mut ChainState,
    model: &PotentialModel,
    config: &SamplerConfig,
    noise: &mut N,
) -> Result<(), SamplerError> {
    single_step(SamplerKind::UldKlmc, state, model, config, noise)
}

/// One unadjusted Langevin step.
pub fn ula_step<N: NoiseSource + ?Sized>(
    state: &mut ChainState,
    model: &PotentialModel,
    config: &SamplerConfig,
    noise: &mut N,
) -> Result<(), SamplerError> {
    single_step(SamplerKind::Ula, state, model, config, noise)
}

/// One Euler–Maruyama step of the full HFHR SDE.
pub fn em_hfhr_step<N: NoiseSource + ?Sized>(
    state: &mut ChainState,
    model: &PotentialModel,
    config: &SamplerConfig,
    noise: &mut N,
) -> Result<(), SamplerError> {
    single_step(SamplerKind::HfhrEm, state, model, config, noise)
}

/// Runs `steps` transitions from `init`, calling `observer(k, &state)` after
/// step `k` (1-based). A non-finite coordinate aborts with
/// [`SamplerError::Diverged`].
pub fn simulate_chain<N, F>(
    init: ChainState,
    model: &PotentialModel,
    config: &SamplerConfig,
    steps: usize,
    noise: &mut N,
    mut observer: F,
) -> Result<ChainState, SamplerError>
where
    N: NoiseSource + ?Sized,
    F: FnMut(usize, &ChainState),
{
    check_dims(&init, model)?;
    let kernel = Kernel::new(*config)?;
    let mut ws = Workspace::new(init.dim());
    let mut state = init;
    for k in 1..=steps {
        kernel.step(&mut state, model, noise, &mut ws);
        if !state.is_finite() {
            return Err(SamplerError::Diverged { step: k });
        }
        observer(k, &state);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::builtin;
    use crate::samplers::{phi_half_step, RandomSource, ZeroNoise};

    fn f1() -> PotentialModel {
        builtin("quadratic_iso", &[]).unwrap()
    }

    fn flat(dim: usize) -> PotentialModel {
        PotentialModel::new("flat", dim, |_| 0.0, |_, g| g.fill(0.0))
    }

    #[test]
    fn frozen_coeff_series_matches_direct() {
        for &(g, h) in &[(2.0f64, 0.049f64), (2.0, 0.051), (1.0, 0.0999), (1.0, 0.1001)] {
            let direct = (h - (1.0 - (-g * h).exp()) / g) / g;
            assert!((frozen_position_coeff(g, h) / direct - 1.0).abs() < 1e-10);
        }
        let (g, h) = (1.0, 1e-6);
        assert!((frozen_position_coeff(g, h) / (h * h / 2.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn psi_tilde_examples() {
        let model = f1();
        let mut s = ChainState::new(vec![2.0], vec![0.0]).unwrap();
        psi_tilde_step(&mut s, &model, 1.0, 0.1, &mut ZeroNoise).unwrap();
        assert!((s.q[0] - 1.8).abs() < 1e-15);
        assert!((s.p[0] + 0.2).abs() < 1e-15);

        let mut s = ChainState::new(vec![0.7], vec![0.3]).unwrap();
        psi_tilde_step(&mut s, &model, 0.0, 0.1, &mut RandomSource::new(1)).unwrap();
        assert_eq!(s.q[0], 0.7);
        assert!((s.p[0] - (0.3 - 0.07)).abs() < 1e-15);

        // flat potential: pure diffusion in q, p unchanged
        let mut s = ChainState::new(vec![0.0; 3], vec![0.5; 3]).unwrap();
        let mut rng = RandomSource::new(5);
        let mut eta = [0.0; 3];
        rng.clone().fill_standard_normal(&mut eta);
        psi_tilde_step(&mut s, &flat(3), 2.0, 0.25, &mut rng).unwrap();
        for i in 0..3 {
            assert!((s.q[i] - 1.0 * eta[i]).abs() < 1e-15);
            assert_eq!(s.p[i], 0.5);
        }
        assert!(psi_tilde_step(&mut s, &flat(3), 1.0, 0.0, &mut ZeroNoise).is_err());
    }

    #[test]
    fn hfhr_flat_zero_noise_is_two_drifts() {
        let (gamma, h) = (2.0, 0.3);
        let cfg = SamplerConfig::hfhr(0.0, gamma, h);
        let mut s = ChainState::new(vec![1.0, -1.0], vec![0.5, 2.0]).unwrap();
        hfhr_step(&mut s, &flat(2), &cfg, &mut ZeroNoise).unwrap();
        let decay = (-gamma * h).exp();
        let gain = (1.0 - (-gamma * h).exp()) / gamma;
        for (i, (q0, p0)) in [(1.0, 0.5), (-1.0, 2.0)].iter().enumerate() {
            assert!((s.p[i] - decay * p0).abs() < 1e-14);
            assert!((s.q[i] - (q0 + gain * p0)).abs() < 1e-14);
        }
    }

    #[test]
    fn hfhr_is_bitwise_composition() {
        let model = f1();
        let cfg = SamplerConfig::hfhr(1.0, 2.0, 0.5);
        let start = ChainState::new(vec![0.3], vec![-1.2]).unwrap();
        let mut a = start.clone();
        let mut rng_a = RandomSource::new(42);
        for _ in 0..50 {
            hfhr_step(&mut a, &model, &cfg, &mut rng_a).unwrap();
        }
        let mut b = start;
        let mut rng_b = RandomSource::new(42);
        let half = PhiFlowKernel::new(2.0, 0.25).unwrap();
        for _ in 0..50 {
            phi_half_step(&mut b, &half, &mut rng_b);
            psi_tilde_step(&mut b, &model, 1.0, 0.5, &mut rng_b).unwrap();
            phi_half_step(&mut b, &half, &mut rng_b);
        }
        assert_eq!(a.q[0].to_bits(), b.q[0].to_bits());
        assert_eq!(a.p[0].to_bits(), b.p[0].to_bits());
    }

    #[test]
    fn uld_zero_noise_closed_form() {
        let (gamma, h) = (2.0, 0.1);
        let cfg = SamplerConfig::uld(gamma, h);
        let mut s = ChainState::new(vec![1.0], vec![0.0]).unwrap();
        uld_step(&mut s, &f1(), &cfg, &mut ZeroNoise).unwrap();
        let e = (-gamma * h).exp();
        let c = (1.0 - e) / gamma;
        let expected_q = 1.0 - (h - c) / gamma;
        let expected_p = -c;
        assert!((s.q[0] - expected_q).abs() < 1e-15);
        assert!((s.p[0] - expected_p).abs() < 1e-15);
    }

    #[test]
    fn ula_examples() {
        let cfg = SamplerConfig::ula(0.5);
        let mut s = ChainState::new(vec![1.0], vec![3.0]).unwrap();
        ula_step(&mut s, &f1(), &cfg, &mut ZeroNoise).unwrap();
        assert_eq!(s.q[0], 0.5);
        assert_eq!(s.p[0], 0.0);

        let mut s = ChainState::zeros(2);
        let mut rng = RandomSource::new(9);
        let mut eta = [0.0; 2];
        rng.clone().fill_standard_normal(&mut eta);
        ula_step(&mut s, &flat(2), &cfg, &mut rng).unwrap();
        assert_eq!(s.q, vec![eta[0], eta[1]]);
    }

    #[test]
    fn em_examples() {
        let model = f1();
        // mean map equals [[1 - alpha h, h], [-h, 1 - gamma h]]
        let (alpha, gamma, h) = (0.7, 1.3, 0.2);
        let cfg = SamplerConfig::hfhr_em(alpha, gamma, h);
        let mut s = ChainState::new(vec![0.4], vec![-0.9]).unwrap();
        em_hfhr_step(&mut s, &model, &cfg, &mut ZeroNoise).unwrap();
        assert!((s.q[0] - ((1.0 - alpha * h) * 0.4 + h * -0.9)).abs() < 1e-15);
        assert!((s.p[0] - (-h * 0.4 + (1.0 - gamma * h) * -0.9)).abs() < 1e-15);

        // nilpotent: alpha = 0, gamma = 2, h = 1
        let cfg = SamplerConfig::hfhr_em(0.0, 2.0, 1.0);
        let mut s = ChainState::new(vec![1.0], vec![0.0]).unwrap();
        em_hfhr_step(&mut s, &model, &cfg, &mut ZeroNoise).unwrap();
        assert_eq!((s.q[0], s.p[0]), (1.0, -1.0));
        em_hfhr_step(&mut s, &model, &cfg, &mut ZeroNoise).unwrap();
        assert_eq!((s.q[0], s.p[0]), (0.0, 0.0));

        // alpha = gamma + 2, h = 1/(1 + gamma): two steps to the origin
        let cfg = SamplerConfig::hfhr_em(4.0, 2.0, 1.0 / 3.0);
        let mut s = ChainState::new(vec![0.8], vec![-1.7]).unwrap();
        em_hfhr_step(&mut s, &model, &cfg, &mut ZeroNoise).unwrap();
        em_hfhr_step(&mut s, &model, &cfg, &mut ZeroNoise).unwrap();
        assert!(s.norm() < 1e-14, "{:?}", s);
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let mut s = ChainState::zeros(1);
        let err = hfhr_step(&mut s, &f1(), &SamplerConfig::ula(0.1), &mut ZeroNoise).unwrap_err();
        assert!(matches!(err, SamplerError::WrongKind { .. }));
        let mut s = ChainState::zeros(2);
        assert!(matches!(
            ula_step(&mut s, &f1(), &SamplerConfig::ula(0.1), &mut ZeroNoise),
            Err(SamplerError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn simulate_chain_contract() {
        let model = f1();
        let cfg = SamplerConfig::hfhr(1.0, 2.0, 0.1);
        let init = ChainState::new(vec![1.0], vec![0.0]).unwrap();
        let out = simulate_chain(init.clone(), &model, &cfg, 0, &mut RandomSource::new(0), |_, _| {
            panic!("no steps")
        })
        .unwrap();
        assert_eq!(out, init);

        let run = |seed| {
            let mut traj = Vec::new();
            simulate_chain(init.clone(), &model, &cfg, 100, &mut RandomSource::new(seed), |k, s| {
                traj.push((k, s.q[0].to_bits(), s.p[0].to_bits()))
            })
            .unwrap();
            traj
        };
        let a = run(11);
        assert_eq!(a, run(11));
        assert_ne!(a, run(12));
        assert_eq!(a.first().unwrap().0, 1);
        assert_eq!(a.last().unwrap().0, 100);
    }

    #[test]
    fn unstable_step_diverges() {
        // alpha h = 25 makes the gradient substep expand by a factor ~24
        let cfg = SamplerConfig::hfhr(1.0, 2.0, 5.0);
        let init = ChainState::new(vec![1.0], vec![0.0]).unwrap();
        let err = simulate_chain(init, &f1(), &cfg, 10_000, &mut RandomSource::new(3), |_, _| {})
            .unwrap_err();
        match err {
            SamplerError::Diverged { step } => assert!(step > 1 && step < 10_000),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn workspace_counts_gradients() {
        let model = f1();
        for kind in SamplerKind::ALL {
            let cfg = SamplerConfig::new(kind, 0.5, 2.0, 0.1);
            let kernel = Kernel::new(cfg).unwrap();
            let mut ws = Workspace::new(1);
            let mut s = ChainState::new(vec![1.0], vec![0.0]).unwrap();
            let mut rng = RandomSource::new(1);
            for _ in 0..37 {
                kernel.step(&mut s, &model, &mut rng, &mut ws);
            }
            assert_eq!(ws.grad_evals(), 37, "{kind}");
        }
    }

    #[test]
    fn normals_consumed_per_step() {
        struct Counting(usize);
        impl NoiseSource for Counting {
            fn fill_standard_normal(&mut self, out: &mut [f64]) {
                self.0 += out.len();
                out.fill(0.0);
            }
        }
        let model = builtin("quadratic_iso", &[("d", 3.0)]).unwrap();
        for kind in SamplerKind::ALL {
            let kernel = Kernel::new(SamplerConfig::new(kind, 0.5, 2.0, 0.1)).unwrap();
            let mut ws = Workspace::new(3);
            let mut s = ChainState::zeros(3);
            let mut c = Counting(0);
            kernel.step(&mut s, &model, &mut c, &mut ws);
            assert_eq!(c.0, 3 * kind.normals_per_coordinate(), "{kind}");
        }
    }
}
