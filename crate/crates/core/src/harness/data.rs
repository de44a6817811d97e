//! Seeded artificial data.
//!
//! Positions are drawn from `ChaCha8Rng::seed_from_u64(seed)` (rand_chacha
//! 0.9). Each particle consumes two `f64` draws, `x` then `y`, using rand's
//! standard `[0, 1)` mapping (53 random mantissa bits scaled by `2^-53`).

use super::config::ExperimentConfig;
use crate::dynamics::{simulate_final, DynamicsError, ParticleState};
use crate::forces::{Control, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` positions i.i.d. uniform on `[0, 1)^2`.
pub fn uniform_positions(n: usize, seed: u64) -> Result<ParticleState, DynamicsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            Vec2::new(x, y)
        })
        .collect();
    ParticleState::new(pts)
}

/// Desired pattern: a uniform sample from `seed`, evolved for `cfg.steps`
/// steps under `u_data`.
pub fn generate_artificial_data(
    seed: u64,
    u_data: Control,
    cfg: &ExperimentConfig,
) -> Result<ParticleState, DynamicsError> {
    let start = uniform_positions(cfg.n_particles, seed)?;
    simulate_final(&start, u_data, &cfg.params, cfg.dt, cfg.steps)
}
