//! Shared fixtures for the benchmarks.

use opinion_limits::limitcheck::probe_states;
use opinion_limits::{InteractionKernel, ModelSpec, NoiseFamily, NoiseKind, NoiseLaw};

/// The default mollified kernel at `n` agents.
pub fn standard_spec(n: usize, h: f64) -> ModelSpec {
    ModelSpec::new(n, h, 1.0, InteractionKernel::default())
}

/// Standard model with Gaussian external noise of variance `0.05·h`.
pub fn external_spec(n: usize, h: f64) -> ModelSpec {
    let noise = NoiseFamily::new(
        NoiseKind::External,
        NoiseLaw::GaussianScaled {
            mean_per_h: 0.0,
            var_per_h: 0.05,
        },
        n,
    )
    .expect("valid external noise");
    standard_spec(n, h).with_noise(noise)
}

/// A reproducible uniform state in `[-1, 1]^n`.
pub fn uniform_state(n: usize) -> Vec<f64> {
    probe_states(n, 1, 2024).swap_remove(0).1
}
