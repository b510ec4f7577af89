use rayon::prelude::*;

use crate::analysis::{quadrature_weights, WeightKernel};
use crate::basis::{ClampSpec, CoeffMatrix, LagrangeBasis, PenaltySpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::SeparableModel;
use crate::sim::{
    active_slots, simulate_forward, simulate_with_tangents, FrozenCurve, NoiseBundle, NoiseKey,
    TangentSlot,
};

/// One draw of the gradient estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub grad: CoeffMatrix,
    /// `int w <phi(Z) - gamma, phi(Z~) - gamma> dt`, an unbiased one-sample
    /// estimate of the squared residual norm.
    pub objective: f64,
}

/// Minibatch average plus the penalty terms.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchGradient {
    pub grad: CoeffMatrix,
    /// Estimate of `G(a)`: mean sample objective plus `H(a)`.
    pub objective: f64,
}

/// Everything about one iterate `a` that the samples share.
pub struct GradientContext<'a> {
    model: &'a dyn SeparableModel,
    curve: FrozenCurve,
    slots: Vec<TangentSlot>,
    quad: Vec<f64>,
    rows: usize,
}

impl<'a> GradientContext<'a> {
    pub fn new(
        model: &'a dyn SeparableModel,
        basis: &LagrangeBasis,
        a: &CoeffMatrix,
        clamp: &ClampSpec,
        grid: &TimeGrid,
        active: &[bool],
        weight: Option<WeightKernel>,
    ) -> Result<Self> {
        let terms = model.dims().terms;
        if a.cols() != terms || active.len() != terms {
            return Err(Error::Shape(format!(
                "model has {terms} terms, coefficients have {} columns and the mask {} entries",
                a.cols(),
                active.len()
            )));
        }
        let curve = FrozenCurve::new(basis, a, clamp, grid)?;
        Ok(GradientContext {
            model,
            slots: active_slots(basis.len(), active),
            quad: quadrature_weights(grid, weight),
            rows: basis.len(),
            curve,
        })
    }

    pub fn curve(&self) -> &FrozenCurve {
        &self.curve
    }

    /// `v(a; xi, W; xi~, W~)`: the primary copy runs forward only, the
    /// shadow copy carries the tangents.
    pub fn sample(&self, noise: &NoiseBundle) -> Result<GradientSample> {
        let dims = self.model.dims();
        let (d, k_terms) = (dims.state, dims.terms);
        let forward = simulate_forward(self.model, &self.curve, &noise.primary)?;
        let shadow = simulate_with_tangents(self.model, &self.curve, &noise.shadow, &self.slots)?;

        let mut grad = CoeffMatrix::zeros(self.rows, k_terms);
        let mut objective = 0.0;
        let mut phi = vec![0.0; k_terms];
        let mut phi_shadow = vec![0.0; k_terms];
        let mut jac_phi = vec![0.0; k_terms * d];
        let mut resid = vec![0.0; k_terms];
        let mut u = vec![0.0; d];
        let mut c = vec![0.0; k_terms];

        for (i, &q) in self.quad.iter().enumerate() {
            let gamma = self.curve.gamma_at(i);
            self.model.phi(&forward[i * d..(i + 1) * d], &mut phi);
            let zs = shadow.z(i);
            self.model.phi(zs, &mut phi_shadow);
            self.model.phi_jacobian(zs, &mut jac_phi);
            for k in 0..k_terms {
                resid[k] = phi[k] - gamma[k];
                objective += q * resid[k] * (phi_shadow[k] - gamma[k]);
            }
            // u = resid^T dphi(Z~), c_j = sum_k resid_k J_kj
            for (l, ul) in u.iter_mut().enumerate() {
                *ul = (0..k_terms).map(|k| resid[k] * jac_phi[k * d + l]).sum();
            }
            match self.curve.jacobian_at(i) {
                None => c.copy_from_slice(&resid),
                Some(jac) => {
                    for (j, cj) in c.iter_mut().enumerate() {
                        *cj = (0..k_terms).map(|k| resid[k] * jac[k * k_terms + j]).sum();
                    }
                }
            }
            let g = self.curve.basis_at(i);
            for (s, slot) in self.slots.iter().enumerate() {
                let y = shadow.tangent(s, i);
                let dot: f64 = u.iter().zip(y).map(|(a, b)| a * b).sum();
                let v = 2.0 * q * (dot - g[slot.basis] * c[slot.term]);
                let entry = grad.get(slot.basis, slot.term) + v;
                grad.set(slot.basis, slot.term, entry);
            }
        }
        Ok(GradientSample { grad, objective })
    }

    /// Average of `batch` independent samples keyed `(seed, iteration, 0..batch)`,
    /// plus `grad H(a)` once.
    pub fn minibatch(
        &self,
        a: &CoeffMatrix,
        penalty: &PenaltySpec,
        active: &[bool],
        seed: u64,
        iteration: u64,
        batch: usize,
    ) -> Result<MinibatchGradient> {
        if batch == 0 {
            return Err(Error::invalid("minibatch size must be at least 1"));
        }
        let grid = *self.curve.grid();
        let law = self.model.initial_law();
        let dims = self.model.dims();
        let samples: Vec<Result<GradientSample>> = (0..batch as u64)
            .into_par_iter()
            .map(|sample| {
                let key = NoiseKey { seed, iteration, sample };
                self.sample(&NoiseBundle::generate(key, law, dims, &grid))
            })
            .collect();
        let mut grad = CoeffMatrix::zeros(a.rows(), a.cols());
        let mut objective = 0.0;
        for s in samples {
            let s = s?;
            grad.axpy(1.0, &s.grad);
            objective += s.objective;
        }
        let inv = 1.0 / batch as f64;
        for v in grad.as_mut_slice() {
            *v *= inv;
        }
        let (h_val, h_grad) = penalty.evaluate_masked(a, active);
        grad.axpy(1.0, &h_grad);
        Ok(MinibatchGradient { grad, objective: objective * inv + h_val })
    }
}

/// One sample of the gradient estimator at `a`, without the penalty.
#[allow(clippy::too_many_arguments)]
pub fn sample_gradient(
    model: &dyn SeparableModel,
    basis: &LagrangeBasis,
    a: &CoeffMatrix,
    clamp: &ClampSpec,
    grid: &TimeGrid,
    noise: &NoiseBundle,
    active: &[bool],
    weight: Option<WeightKernel>,
) -> Result<GradientSample> {
    GradientContext::new(model, basis, a, clamp, grid, active, weight)?.sample(noise)
}

/// Minibatch estimate `v_{m+1}` at `a_m`, with samples keyed by
/// `(seed, iteration, i)` for `i < batch`.
#[allow(clippy::too_many_arguments)]
pub fn minibatch_gradient(
    model: &dyn SeparableModel,
    basis: &LagrangeBasis,
    a: &CoeffMatrix,
    clamp: &ClampSpec,
    penalty: &PenaltySpec,
    grid: &TimeGrid,
    active: &[bool],
    weight: Option<WeightKernel>,
    batch: usize,
    seed: u64,
    iteration: u64,
) -> Result<MinibatchGradient> {
    GradientContext::new(model, basis, a, clamp, grid, active, weight)?
        .minibatch(a, penalty, active, seed, iteration, batch)
}
