//! Normalised Hermite functions and the Gaussian-kernel expansion used to
//! turn the convolution drift `E[exp(-(X - x)^2 / 2)]` into a separable sum.
//!
//! Everything is evaluated with three-term recurrences, so no factorial or
//! power of two is ever formed explicitly and high orders neither overflow
//! nor underflow prematurely.

use std::f64::consts::{PI, SQRT_2};

/// Hermite functions `phi_k(x) = H_k(x) exp(-x^2/2) / sqrt(2^k k! sqrt(pi))`
/// for `k = 0..=k_trunc`, together with the kernel coefficients
/// `alpha_k(x) = integral of exp(-(y - x)^2 / 2) phi_k(y) dy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteSystem {
    k_trunc: usize,
}

impl HermiteSystem {
    pub fn new(k_trunc: usize) -> Self {
        HermiteSystem { k_trunc }
    }

    pub fn k_trunc(&self) -> usize {
        self.k_trunc
    }

    /// Number of terms, `k_trunc + 1`.
    pub fn len(&self) -> usize {
        self.k_trunc + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes `phi_0(x), ..., phi_K(x)` into `out`.
    pub fn functions(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
        if self.k_trunc >= 1 {
            out[1] = SQRT_2 * x * out[0];
        }
        for k in 1..self.k_trunc {
            let kf = k as f64;
            out[k + 1] =
                (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        }
    }

    /// Writes `phi_k'(x)` into `out`.
    ///
    /// Uses `phi_k' = sqrt(k/2) phi_{k-1} - sqrt((k+1)/2) phi_{k+1}`, which
    /// needs one order beyond the truncation.
    pub fn function_derivatives(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let ext = HermiteSystem::new(self.k_trunc + 1);
        let mut vals = vec![0.0; ext.len()];
        ext.functions(x, &mut vals);
        ladder_derivative(&vals, out);
    }

    /// Writes `alpha_0(x), ..., alpha_K(x)` into `out`, where
    /// `alpha_k(x) = pi^{1/4} (1/2)^{k/2} x^k exp(-x^2/4) / sqrt(k!)`.
    pub fn kernel_coefficients(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        out[0] = PI.powf(0.25) * (-0.25 * x * x).exp();
        for k in 1..=self.k_trunc {
            out[k] = out[k - 1] * x / (2.0 * k as f64).sqrt();
        }
    }

    /// Writes `alpha_k'(x)` into `out`; same ladder identity as the Hermite
    /// functions.
    pub fn kernel_coefficient_derivatives(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let ext = HermiteSystem::new(self.k_trunc + 1);
        let mut vals = vec![0.0; ext.len()];
        ext.kernel_coefficients(x, &mut vals);
        ladder_derivative(&vals, out);
    }

    /// Truncated kernel `sum_k alpha_k(x) phi_k(y)`, approximating
    /// `exp(-(y - x)^2 / 2)`.
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        let mut alpha = vec![0.0; self.len()];
        let mut phi = vec![0.0; self.len()];
        self.kernel_coefficients(x, &mut alpha);
        self.functions(y, &mut phi);
        alpha.iter().zip(&phi).map(|(a, p)| a * p).sum()
    }

    /// Uniform bound on the Euclidean norm of `(phi_0(x), ..., phi_K(x))`,
    /// from Cramér's inequality `|phi_k| <= pi^{-1/4}`.
    pub fn function_norm_bound(&self) -> f64 {
        (self.len() as f64).sqrt() * PI.powf(-0.25)
    }
}

// f_k' = sqrt(k/2) f_{k-1} - sqrt((k+1)/2) f_{k+1}, with `vals` one longer than `out`.
fn ladder_derivative(vals: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let kf = k as f64;
        let lower = if k == 0 { 0.0 } else { (kf / 2.0).sqrt() * vals[k - 1] };
        *o = lower - ((kf + 1.0) / 2.0).sqrt() * vals[k + 1];
    }
}
