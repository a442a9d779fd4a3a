//! Ground truth and corrupted measurements.

use ellipsoid_attitude_core::dynamics::{integrator_step, AttitudeState};
use ellipsoid_attitude_core::ellipsoid::EllipsoidRn;
use ellipsoid_attitude_core::filter::MeasurementBundle;
use ellipsoid_attitude_core::linalg::Spd3;
use ellipsoid_attitude_core::so3::exp_so3;
use ellipsoid_attitude_core::wahba::BodyObservations;
use ellipsoid_attitude_core::Vec3;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scenario::{NoiseMode, Scenario};
use crate::SimError;

/// Integrates the true state for `l × measurement_count` steps; the result
/// includes the initial state.
pub fn simulate_truth(s: &Scenario) -> Result<Vec<AttitudeState>, SimError> {
    let mut trajectory = Vec::with_capacity(s.total_steps() + 1);
    let mut state = s.truth0;
    trajectory.push(state);
    for step in 0..s.total_steps() {
        state = integrator_step(&state, &s.inertia, &s.potential)
            .map_err(|e| SimError::Runtime(format!("truth integration failed at step {step}: {e}")))?;
        trajectory.push(state);
    }
    Ok(trajectory)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent noise stream for one (seed, instant, channel) triple. Channels
/// `0..m` are the directions and channel `m` the gyro.
pub fn noise_stream(seed: u64, instant: usize, channel: usize) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(seed) ^ splitmix64((instant as u64) << 20 | channel as u64));
    ChaCha8Rng::seed_from_u64(key)
}

fn draw(bound: &Spd3, mode: NoiseMode, rng: &mut ChaCha8Rng) -> Vec3 {
    let e = EllipsoidRn::centered(*bound);
    match mode {
        NoiseMode::Interior => e.sample_uniform(rng),
        NoiseMode::Boundary => e.sample_boundary(rng),
    }
}

/// The errors drawn at one instant: `νⁱ` per direction and `υ` for the gyro.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawnErrors {
    pub nu: Vec<Vec3>,
    pub upsilon: Vec3,
}

pub fn draw_errors(s: &Scenario, instant: usize) -> DrawnErrors {
    let (direction_bounds, omega_bound) = s.bounds_at(instant);
    let nu = direction_bounds
        .iter()
        .enumerate()
        .map(|(i, b)| draw(b, s.noise_mode, &mut noise_stream(s.seed, instant, i)))
        .collect();
    let upsilon = draw(&omega_bound, s.noise_mode, &mut noise_stream(s.seed, instant, direction_bounds.len()));
    DrawnErrors { nu, upsilon }
}

/// Measurements of `truth` at 1-based measurement instant `instant`:
/// `b̃ⁱ = exp(−S(νⁱ))·Cᵀeⁱ` (so that `bⁱ = exp(S(νⁱ))·b̃ⁱ`) and `ω̃ = ω − υ`.
pub fn corrupt_measurements(truth: &AttitudeState, s: &Scenario, instant: usize) -> Result<MeasurementBundle, SimError> {
    let errors = draw_errors(s, instant);
    let (direction_bounds, omega_bound) = s.bounds_at(instant);
    let measured = s
        .dirs
        .directions()
        .iter()
        .zip(&errors.nu)
        .map(|(e, nu)| exp_so3(&-nu) * (truth.c.transpose() * *e))
        .collect();
    let obs = BodyObservations::new(measured).map_err(|e| SimError::Runtime(e.to_string()))?;
    MeasurementBundle::new(s.dirs.clone(), obs, truth.omega - errors.upsilon, direction_bounds, omega_bound)
        .map_err(|e| SimError::Runtime(e.to_string()))
}
