use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::TimeGrid;
use crate::model::{Dims, InitialLaw};

pub type NoiseRng = ChaCha8Rng;

/// Purpose tags mixed into every derived seed so that different consumers
/// of the same master seed never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Gradient = 1,
    InitialIterate = 2,
    Particles = 3,
    Estimate = 4,
}

/// Deterministic generator for the coordinates `(seed, a, b, tag)`.
pub fn derived_rng(seed: u64, a: u64, b: u64, tag: StreamTag) -> NoiseRng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&a.to_le_bytes());
    bytes[16..24].copy_from_slice(&b.to_le_bytes());
    bytes[24..].copy_from_slice(&(tag as u64).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Identifies the noise of one gradient sample: sample `sample` of SGD
/// iteration `iteration` under master seed `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub iteration: u64,
    pub sample: u64,
}

/// One realisation of `(xi, W)` on a grid: the initial draw and the
/// Brownian increments, `steps x q`, each `N(0, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStream {
    pub initial: Vec<f64>,
    pub increments: Vec<f64>,
}

impl NoiseStream {
    pub fn draw(rng: &mut NoiseRng, law: &InitialLaw, dims: Dims, grid: &TimeGrid) -> Self {
        let mut initial = vec![0.0; dims.state];
        law.sample(rng, &mut initial);
        let sd = grid.step().sqrt();
        let increments = (0..grid.steps() * dims.noise)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect();
        NoiseStream { initial, increments }
    }

    pub fn increment(&self, step: usize, q: usize) -> &[f64] {
        &self.increments[step * q..(step + 1) * q]
    }
}

/// The two independent copies `(xi, W)` and `(xi~, W~)` consumed by one
/// gradient sample. They come from distinct ChaCha streams of one key.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    pub primary: NoiseStream,
    pub shadow: NoiseStream,
}

impl NoiseBundle {
    pub fn generate(key: NoiseKey, law: &InitialLaw, dims: Dims, grid: &TimeGrid) -> Self {
        let mut rng = derived_rng(key.seed, key.iteration, key.sample, StreamTag::Gradient);
        rng.set_stream(0);
        let primary = NoiseStream::draw(&mut rng, law, dims, grid);
        rng.set_stream(1);
        rng.set_word_pos(0);
        let shadow = NoiseStream::draw(&mut rng, law, dims, grid);
        NoiseBundle { primary, shadow }
    }
}
