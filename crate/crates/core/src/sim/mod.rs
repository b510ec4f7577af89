//! Euler-Maruyama simulation of the frozen-curve SDE, its tangent
//! processes, and the particle-system benchmark.

mod euler;
mod frozen;
mod noise;
mod particles;

pub use euler::{active_slots, simulate_forward, simulate_with_tangents, PathBundle, TangentSlot};
pub use frozen::FrozenCurve;
pub use noise::{derived_rng, NoiseBundle, NoiseKey, NoiseRng, NoiseStream, StreamTag};
pub use particles::{simulate_particle_system, ParticleEstimate};
