//! Shared fixtures for the benchmarks.

use euler_align::grid::{init_grid, GridProfile, GridState, VelocityField};
use euler_align::particles::ParticleState;
use euler_align::AtomicMeasure;

/// Deterministic quasi-random point in `[-1, 1)` (golden-ratio sequence).
fn quasi(i: usize, offset: f64) -> f64 {
    let g = 0.618_033_988_749_895;
    2.0 * ((i as f64 * g + offset).fract()) - 1.0
}

/// Uniform-weight measure on `n` points in `[-1, 1)^dim`.
pub fn measure(n: usize, dim: usize, offset: f64) -> AtomicMeasure {
    let coords = (0..n * dim).map(|i| quasi(i, offset)).collect();
    AtomicMeasure::from_flat(dim, coords, vec![1.0 / n as f64; n]).expect("valid fixture")
}

pub fn particle_state(n: usize, dim: usize) -> ParticleState {
    let m = measure(n, dim, 0.1);
    let v = (0..n * dim).map(|i| quasi(i, 0.7)).collect();
    ParticleState::new(m, v).expect("valid fixture")
}

pub fn bump_grid(cells: usize, inv_n: f64) -> GridState {
    let profile = GridProfile::GaussianBump {
        center: 0.0,
        width: 1.0,
        velocity: VelocityField::Tanh {
            drift: 0.0,
            amplitude: -0.5,
            scale: 1.0,
            center: 0.0,
        },
    };
    init_grid(&profile, 10.0, cells, inv_n, None).expect("valid fixture")
}
