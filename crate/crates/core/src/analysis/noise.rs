use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::controllers::CostChannel;
use crate::error::{Error, Result};
use crate::games::GameSpec;

/// Zero-mean additive Gaussian noise on every cost measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn clean() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Cost measurements perturbed by `N(0, σ²)` draws from a seeded stream.
///
/// With `σ = 0` no draws are made and the clean value is returned unchanged.
#[derive(Clone, Debug)]
pub struct NoisyChannel {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl NoisyChannel {
    pub fn new(noise: NoiseConfig) -> Result<Self> {
        noise.validate()?;
        Ok(Self {
            sigma: noise.sigma,
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Checked noisy evaluation of `J_i(u)`.
    pub fn evaluate(&mut self, game: &GameSpec, i: usize, u: &[f64]) -> Result<f64> {
        let clean = game.evaluate_cost(i, u)?;
        Ok(self.perturb(clean))
    }

    #[inline]
    fn perturb(&mut self, clean: f64) -> f64 {
        if self.sigma == 0.0 {
            clean
        } else {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            clean + self.sigma * z
        }
    }
}

impl CostChannel for NoisyChannel {
    #[inline]
    fn measure(&mut self, game: &GameSpec, agent: usize, u: &[f64]) -> f64 {
        let clean = game.cost_unchecked(agent, u);
        self.perturb(clean)
    }
}

pub fn noisy_cost_channel(noise: NoiseConfig) -> Result<NoisyChannel> {
    NoisyChannel::new(noise)
}

/// Wraps a channel and reports `-J`; flips the sign of every dithered estimate.
/// Used as a negative control for the averaging checks.
#[derive(Clone, Debug, Default)]
pub struct NegatedChannel<C>(pub C);

impl<C: CostChannel> CostChannel for NegatedChannel<C> {
    fn measure(&mut self, game: &GameSpec, agent: usize, u: &[f64]) -> f64 {
        -self.0.measure(game, agent, u)
    }
}

/// Independent per-run seed from a master seed and a run index (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
