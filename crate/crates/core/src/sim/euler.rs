//! Euler-Maruyama for the frozen-curve SDE
//! `dZ = h(La)(t) (alpha(t, Z) dt + beta(t, Z) dW)` and its tangent system.
//!
//! The curve is read at the left endpoint of every step. The tangent
//! `Y^{h,j} = dZ / da_{h,j}` is advanced with the same increments as `Z`:
//!
//! ```text
//! Y_{i+1} = Y_i + g_h(t_i) sum_k J_{kj} (alpha_k h + beta_k dW_i)
//!               + sum_k gamma_k (dalpha_k/dz h + dbeta_k/dz dW_i) Y_i
//! ```
//!
//! where `J` is the clamp Jacobian at `(La)(t_i)`.

use super::frozen::FrozenCurve;
use super::noise::NoiseStream;
use crate::error::{Error, Result};
use crate::model::{Dims, SeparableModel};

/// Index pair `(h, j)` of a coefficient `a_{h,j}` whose tangent is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TangentSlot {
    pub basis: usize,
    pub term: usize,
}

/// All `(h, j)` with `j` active, ordered by `h` then `j`.
pub fn active_slots(basis_len: usize, active_terms: &[bool]) -> Vec<TangentSlot> {
    (0..basis_len)
        .flat_map(|h| {
            active_terms
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(move |(j, _)| TangentSlot { basis: h, term: j })
        })
        .collect()
}

/// A path of `Z` together with the tangent paths of the requested slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    state_dim: usize,
    points: usize,
    z: Vec<f64>,
    slots: Vec<TangentSlot>,
    tangents: Vec<f64>,
}

impl PathBundle {
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn slots(&self) -> &[TangentSlot] {
        &self.slots
    }

    /// `Z_{t_i}`.
    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// Whole state path, `(steps + 1) x d`.
    pub fn z_path(&self) -> &[f64] {
        &self.z
    }

    /// `Y^{slot}_{t_i}` for the `s`-th tracked slot.
    pub fn tangent(&self, s: usize, i: usize) -> &[f64] {
        let d = self.state_dim;
        let base = (s * self.points + i) * d;
        &self.tangents[base..base + d]
    }
}

fn check_shapes(model: &dyn SeparableModel, curve: &FrozenCurve, noise: &NoiseStream) -> Result<Dims> {
    let dims = model.dims();
    if curve.terms() != dims.terms {
        return Err(Error::Shape(format!(
            "curve has {} components, model has {} terms",
            curve.terms(),
            dims.terms
        )));
    }
    let grid = curve.grid();
    if (grid.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
        return Err(Error::Shape(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon(),
            model.horizon()
        )));
    }
    if noise.initial.len() != dims.state || noise.increments.len() != grid.steps() * dims.noise {
        return Err(Error::Shape("noise stream does not match model and grid".into()));
    }
    Ok(dims)
}

// incr[k*d + l] = alpha_{k,l} h + sum_r beta_{k,l,r} dw_r
fn increments(dims: Dims, alpha: &[f64], beta: &[f64], h: f64, dw: &[f64], incr: &mut [f64]) {
    let q = dims.noise;
    for (kl, out) in incr.iter_mut().enumerate() {
        let noise: f64 = beta[kl * q..(kl + 1) * q].iter().zip(dw).map(|(b, w)| b * w).sum();
        *out = alpha[kl] * h + noise;
    }
}

/// Forward Euler path of `Z^a(xi, W)`, `(steps + 1) x d` row-major.
pub fn simulate_forward(
    model: &dyn SeparableModel,
    curve: &FrozenCurve,
    noise: &NoiseStream,
) -> Result<Vec<f64>> {
    let dims = check_shapes(model, curve, noise)?;
    let grid = curve.grid();
    let (d, k_terms) = (dims.state, dims.terms);
    let h = grid.step();
    let mut path = vec![0.0; grid.len() * d];
    path[..d].copy_from_slice(&noise.initial);
    let mut alpha = vec![0.0; dims.drift_len()];
    let mut beta = vec![0.0; dims.diffusion_len()];
    let mut incr = vec![0.0; dims.drift_len()];
    for i in 0..grid.steps() {
        let t = grid.time(i);
        let (done, rest) = path.split_at_mut((i + 1) * d);
        let z = &done[i * d..];
        let next = &mut rest[..d];
        model.drift(t, z, &mut alpha);
        model.diffusion(t, z, &mut beta);
        increments(dims, &alpha, &beta, h, noise.increment(i, dims.noise), &mut incr);
        let gamma = curve.gamma_at(i);
        next.copy_from_slice(z);
        for k in 0..k_terms {
            for l in 0..d {
                next[l] += gamma[k] * incr[k * d + l];
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged { step: i + 1 });
        }
    }
    Ok(path)
}

/// Euler path of `Z^a(xi, W)` and of the tangents `Y^{h,j}` for `slots`,
/// all driven by the same increments.
pub fn simulate_with_tangents(
    model: &dyn SeparableModel,
    curve: &FrozenCurve,
    noise: &NoiseStream,
    slots: &[TangentSlot],
) -> Result<PathBundle> {
    let dims = check_shapes(model, curve, noise)?;
    let grid = curve.grid();
    let (d, q, k_terms) = (dims.state, dims.noise, dims.terms);
    if let Some(bad) = slots.iter().find(|s| s.basis >= curve.basis_len() || s.term >= k_terms) {
        return Err(Error::Shape(format!("tangent slot {bad:?} out of range")));
    }
    let h = grid.step();
    let points = grid.len();
    let mut z = vec![0.0; points * d];
    z[..d].copy_from_slice(&noise.initial);
    let mut tangents = vec![0.0; slots.len() * points * d];

    let mut alpha = vec![0.0; dims.drift_len()];
    let mut beta = vec![0.0; dims.diffusion_len()];
    let mut dalpha = vec![0.0; dims.drift_len() * d];
    let mut dbeta = vec![0.0; dims.diffusion_len() * d];
    let mut incr = vec![0.0; dims.drift_len()];
    let mut forcing = vec![0.0; k_terms * d];
    let mut lin = vec![0.0; d * d];
    let mut zi = vec![0.0; d];
    let mut terms_used = vec![false; k_terms];
    for s in slots {
        terms_used[s.term] = true;
    }

    for i in 0..grid.steps() {
        let t = grid.time(i);
        zi.copy_from_slice(&z[i * d..(i + 1) * d]);
        model.drift(t, &zi, &mut alpha);
        model.diffusion(t, &zi, &mut beta);
        model.drift_state_derivative(t, &zi, &mut dalpha);
        model.diffusion_state_derivative(t, &zi, &mut dbeta);
        let dw = noise.increment(i, q);
        increments(dims, &alpha, &beta, h, dw, &mut incr);
        let gamma = curve.gamma_at(i);

        {
            let next = &mut z[(i + 1) * d..(i + 2) * d];
            next.copy_from_slice(&zi);
            for k in 0..k_terms {
                for l in 0..d {
                    next[l] += gamma[k] * incr[k * d + l];
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::SimulationDiverged { step: i + 1 });
            }
        }

        // forcing[j*d + l] = sum_k J_{kj} incr_{k,l}
        match curve.jacobian_at(i) {
            None => forcing.copy_from_slice(&incr),
            Some(jac) => {
                for j in (0..k_terms).filter(|&j| terms_used[j]) {
                    for l in 0..d {
                        forcing[j * d + l] =
                            (0..k_terms).map(|k| jac[k * k_terms + j] * incr[k * d + l]).sum();
                    }
                }
            }
        }

        // lin[l*d + m] = sum_k gamma_k (dalpha_{k,l}/dz_m h + sum_r dbeta_{k,l,r}/dz_m dw_r)
        lin.fill(0.0);
        for k in 0..k_terms {
            if gamma[k] == 0.0 {
                continue;
            }
            for l in 0..d {
                for m in 0..d {
                    let mut v = dalpha[(k * d + l) * d + m] * h;
                    for r in 0..q {
                        v += dbeta[((k * d + l) * q + r) * d + m] * dw[r];
                    }
                    lin[l * d + m] += gamma[k] * v;
                }
            }
        }

        let g = curve.basis_at(i);
        for (s, slot) in slots.iter().enumerate() {
            let base = (s * points + i) * d;
            let (cur, next) = tangents[base..base + 2 * d].split_at_mut(d);
            let gh = g[slot.basis];
            for l in 0..d {
                let mut v = cur[l] + gh * forcing[slot.term * d + l];
                for m in 0..d {
                    v += lin[l * d + m] * cur[m];
                }
                next[l] = v;
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::SimulationDiverged { step: i + 1 });
            }
        }
    }

    Ok(PathBundle { state_dim: d, points, z, slots: slots.to_vec(), tangents })
}
