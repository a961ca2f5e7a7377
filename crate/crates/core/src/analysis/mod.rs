//! Diagnostics: Lyapunov quantities, numerical oracles for the pseudogradient and
//! its dithered estimate, measurement noise and price histograms.

mod averaging;
mod histogram;
mod lyapunov;
mod noise;
mod oracles;

pub use averaging::{averaging_window, dither_average, dither_average_error};
pub use histogram::{price_histogram, sample_stats, tail_samples, Histogram, SampleStats};
pub use lyapunov::{
    lyapunov_derivative_along, lyapunov_rate, lyapunov_value, lyapunov_weights, weighted_lyapunov_value,
};
pub use noise::{derive_seed, noisy_cost_channel, NegatedChannel, NoiseConfig, NoisyChannel};
pub use oracles::{finite_diff_pseudogradient, monotonicity_probe, MonotonicityReport, VIOLATION_TOL};
