//! Mean-field interacting particle system, the Monte Carlo benchmark for
//! `gamma(t) = E[phi(X_t)]`.
//!
//! Every step first forms the empirical mean `(1/N) sum_k phi(X^k_{t_i})`
//! and then moves all particles with that mean frozen over the step.
//! Particles are split into fixed-size chunks, each with its own random
//! stream, and chunk sums are reduced in chunk order, so results do not
//! depend on the number of threads.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::noise::{derived_rng, NoiseRng, StreamTag};
use crate::curve::SampledCurve;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::SeparableModel;

const CHUNK: usize = 512;

/// Empirical curve of the particle system and its pointwise standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEstimate {
    pub curve: SampledCurve,
    /// `sd(phi_k(X_{t_i})) / sqrt(N)`, laid out like the curve values.
    pub std_error: Vec<f64>,
    pub particles: usize,
}

struct Chunk {
    rng: NoiseRng,
    states: Vec<f64>,
}

struct Scratch {
    phi: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    dw: Vec<f64>,
}

pub fn simulate_particle_system(
    model: &dyn SeparableModel,
    particles: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<ParticleEstimate> {
    if particles < 2 {
        return Err(Error::invalid(format!("need at least 2 particles, got {particles}")));
    }
    if (grid.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
        return Err(Error::Shape(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon(),
            model.horizon()
        )));
    }
    let dims = model.dims();
    let (d, q, k_terms) = (dims.state, dims.noise, dims.terms);
    let law = model.initial_law();

    let mut chunks: Vec<Chunk> = (0..particles.div_ceil(CHUNK))
        .map(|c| {
            let size = CHUNK.min(particles - c * CHUNK);
            let mut rng = derived_rng(seed, c as u64, 0, StreamTag::Particles);
            let mut states = vec![0.0; size * d];
            for x in states.chunks_mut(d) {
                law.sample(&mut rng, x);
            }
            Chunk { rng, states }
        })
        .collect();

    let scratch = || Scratch {
        phi: vec![0.0; k_terms],
        alpha: vec![0.0; dims.drift_len()],
        beta: vec![0.0; dims.diffusion_len()],
        dw: vec![0.0; q],
    };

    // sums[0..K] = sum phi, sums[K..2K] = sum phi^2
    let accumulate = |states: &[f64], s: &mut Scratch, sums: &mut [f64]| {
        for x in states.chunks(d) {
            model.phi(x, &mut s.phi);
            for (k, p) in s.phi.iter().enumerate() {
                sums[k] += p;
                sums[k_terms + k] += p * p;
            }
        }
    };

    let reduce = |partials: Vec<Vec<f64>>| {
        let mut total = vec![0.0; 2 * k_terms];
        for p in partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    };

    let n = particles as f64;
    let mut values = Vec::with_capacity(grid.len() * k_terms);
    let mut std_error = Vec::with_capacity(grid.len() * k_terms);
    let mut record = |sums: &[f64]| {
        for k in 0..k_terms {
            let mean = sums[k] / n;
            let var = (sums[k_terms + k] / n - mean * mean).max(0.0);
            values.push(mean);
            std_error.push((var / n).sqrt());
        }
    };

    let partials: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|c| {
            let mut s = scratch();
            let mut sums = vec![0.0; 2 * k_terms];
            accumulate(&c.states, &mut s, &mut sums);
            sums
        })
        .collect();
    let mut sums = reduce(partials);
    record(&sums);

    let h = grid.step();
    let sd = h.sqrt();
    for i in 0..grid.steps() {
        let t = grid.time(i);
        let gamma: Vec<f64> = sums[..k_terms].iter().map(|s| s / n).collect();
        let partials: Vec<Result<Vec<f64>>> = chunks
            .par_iter_mut()
            .map(|c| {
                let mut s = scratch();
                for x in c.states.chunks_mut(d) {
                    model.drift(t, x, &mut s.alpha);
                    model.diffusion(t, x, &mut s.beta);
                    for w in s.dw.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut c.rng);
                        *w = sd * z;
                    }
                    for (l, xl) in x.iter_mut().enumerate() {
                        let mut dx = 0.0;
                        for (k, g) in gamma.iter().enumerate() {
                            let base = k * d + l;
                            let noise: f64 =
                                s.beta[base * q..(base + 1) * q].iter().zip(&s.dw).map(|(b, w)| b * w).sum();
                            dx += g * (s.alpha[base] * h + noise);
                        }
                        *xl += dx;
                    }
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(Error::SimulationDiverged { step: i + 1 });
                    }
                }
                let mut sums = vec![0.0; 2 * k_terms];
                accumulate(&c.states, &mut s, &mut sums);
                Ok(sums)
            })
            .collect();
        sums = reduce(partials.into_iter().collect::<Result<Vec<_>>>()?);
        record(&sums);
    }

    Ok(ParticleEstimate {
        curve: SampledCurve::new(*grid, k_terms, values)?,
        std_error,
        particles,
    })
}
