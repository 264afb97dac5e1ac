use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Supplier of i.i.d. standard normal draws for the transition kernels.
pub trait NoiseSource {
    fn fill_standard_normal(&mut self, out: &mut [f64]);
}

/// Seeded, counter-based normal stream.
///
/// Streams are keyed on `(seed, stream)`: two sources built from the same
/// pair produce identical draws, and distinct stream ids give independent
/// ChaCha streams. Chains derive their source from `(seed, chain index)`,
/// so results do not depend on how chains are scheduled.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Stream for chain `chain` of configuration `config` in an experiment.
    pub fn for_chain(seed: u64, config: u32, chain: u32) -> Self {
        Self::with_stream(seed, ((config as u64) << 32) | chain as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

impl NoiseSource for RandomSource {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }
}

/// Deterministic source that returns zeros; turns every kernel into its
/// mean map.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        (**self).fill_standard_normal(out)
    }
}
