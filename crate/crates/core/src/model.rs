//! Separable McKean-Vlasov models
//!
//! `dX_t = gamma(t) (alpha(t, X_t) dt + beta(t, X_t) dW_t)`, `gamma(t) = E[phi(X_t)]`,
//! where `gamma` is a row vector of `K` law-dependent weights and the state
//! enters only through `alpha` (`K x d`), `beta` (`K x d x q`) and `phi`.
//!
//! All tensors are passed as flat row-major slices:
//!
//! | quantity        | shape         | index of `[k][l][r][i]`      |
//! |-----------------|---------------|------------------------------|
//! | `alpha`         | `K x d`       | `k*d + l`                    |
//! | `beta`          | `K x d x q`   | `(k*d + l)*q + r`            |
//! | `phi`           | `K`           | `k`                          |
//! | `grad phi`      | `K x d`       | `k*d + i`                    |
//! | `d alpha / dz_i`| `K x d x d`   | `(k*d + l)*d + i`            |
//! | `d beta / dz_i` | `K x d x q x d` | `((k*d + l)*q + r)*d + i`  |

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hermite::HermiteSystem;

/// Step used by the finite-difference fallbacks for state derivatives.
pub const FD_STATE_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// `d`, dimension of the state.
    pub state: usize,
    /// `q`, dimension of the Brownian motion.
    pub noise: usize,
    /// `K`, number of separable terms.
    pub terms: usize,
}

impl Dims {
    pub fn drift_len(&self) -> usize {
        self.terms * self.state
    }

    pub fn diffusion_len(&self) -> usize {
        self.terms * self.state * self.noise
    }
}

pub type Sampler = Arc<dyn Fn(&mut dyn RngCore, &mut [f64]) + Send + Sync>;

/// Law of `X_0`.
#[derive(Clone)]
pub enum InitialLaw {
    Dirac(Vec<f64>),
    /// Independent standard normal components.
    StandardGaussian,
    Custom(Sampler),
}

impl InitialLaw {
    pub fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        match self {
            InitialLaw::Dirac(x0) => out.copy_from_slice(x0),
            InitialLaw::StandardGaussian => {
                for o in out.iter_mut() {
                    *o = StandardNormal.sample(rng);
                }
            }
            InitialLaw::Custom(f) => f(rng, out),
        }
    }
}

impl fmt::Debug for InitialLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialLaw::Dirac(x0) => f.debug_tuple("Dirac").field(x0).finish(),
            InitialLaw::StandardGaussian => f.write_str("StandardGaussian"),
            InitialLaw::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A McKean-Vlasov SDE with separable coefficients.
///
/// Implementations must be pure: every method is a function of its
/// arguments only, so one model can be shared across simulation threads.
pub trait SeparableModel: Send + Sync {
    fn name(&self) -> &str;

    fn dims(&self) -> Dims;

    fn horizon(&self) -> f64;

    fn initial_law(&self) -> &InitialLaw;

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn phi(&self, x: &[f64], out: &mut [f64]);

    fn phi_jacobian(&self, x: &[f64], out: &mut [f64]);

    /// `d alpha / dz_i`. The default is a central difference with step
    /// [`FD_STATE_STEP`]; built-in models override it.
    fn drift_state_derivative(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let dims = self.dims();
        central_difference(x, dims.drift_len(), out, |z, buf| self.drift(t, z, buf));
    }

    /// `d beta / dz_i`, same fallback as [`Self::drift_state_derivative`].
    fn diffusion_state_derivative(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let dims = self.dims();
        central_difference(x, dims.diffusion_len(), out, |z, buf| self.diffusion(t, z, buf));
    }

    /// Whether the two state-derivative methods are closed form.
    fn has_state_derivatives(&self) -> bool {
        false
    }

    /// Terms whose curve is learned. Terms with `phi` constant are known in
    /// advance and stay frozen at their initial value.
    fn active_terms(&self) -> Vec<bool> {
        vec![true; self.dims().terms]
    }

    /// Uniform bound on `|phi(x)|`, if `phi` is bounded.
    fn phi_bound(&self) -> Option<f64> {
        None
    }
}

// out[j*d + i] = d f_j / d x_i for f with `len` outputs.
fn central_difference<F>(x: &[f64], len: usize, out: &mut [f64], mut f: F)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let d = x.len();
    let mut z = x.to_vec();
    let mut hi = vec![0.0; len];
    let mut lo = vec![0.0; len];
    for i in 0..d {
        z[i] = x[i] + FD_STATE_STEP;
        f(&z, &mut hi);
        z[i] = x[i] - FD_STATE_STEP;
        f(&z, &mut lo);
        z[i] = x[i];
        for j in 0..len {
            out[j * d + i] = (hi[j] - lo[j]) / (2.0 * FD_STATE_STEP);
        }
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// Kuramoto-Shinomoto-Sakaguchi dynamics
/// `dX = (E[sin X] cos X - E[cos X] sin X) dt + sigma dW`.
#[derive(Debug, Clone)]
pub struct Kuramoto {
    sigma: f64,
    horizon: f64,
    law: InitialLaw,
    drift_on: bool,
}

pub fn make_kuramoto(x0: f64, sigma: f64, horizon: f64) -> Result<Kuramoto> {
    check_horizon(horizon)?;
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::invalid(format!("sigma must be non-negative, got {sigma}")));
    }
    Ok(Kuramoto { sigma, horizon, law: InitialLaw::Dirac(vec![x0]), drift_on: true })
}

impl Kuramoto {
    /// Same model with `alpha == 0`, so `X_t = x0 + sigma W_t`.
    pub fn without_drift(mut self) -> Self {
        self.drift_on = false;
        self
    }
}

impl SeparableModel for Kuramoto {
    fn name(&self) -> &str {
        "kuramoto"
    }

    fn dims(&self) -> Dims {
        Dims { state: 1, noise: 1, terms: 3 }
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial_law(&self) -> &InitialLaw {
        &self.law
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        if self.drift_on {
            let (s, c) = x[0].sin_cos();
            out.copy_from_slice(&[c, -s, 0.0]);
        } else {
            out.fill(0.0);
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[0.0, 0.0, self.sigma]);
    }

    fn phi(&self, x: &[f64], out: &mut [f64]) {
        let (s, c) = x[0].sin_cos();
        out.copy_from_slice(&[s, c, 1.0]);
    }

    fn phi_jacobian(&self, x: &[f64], out: &mut [f64]) {
        let (s, c) = x[0].sin_cos();
        out.copy_from_slice(&[c, -s, 0.0]);
    }

    fn drift_state_derivative(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        if self.drift_on {
            let (s, c) = x[0].sin_cos();
            out.copy_from_slice(&[-s, -c, 0.0]);
        } else {
            out.fill(0.0);
        }
    }

    fn diffusion_state_derivative(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn has_state_derivatives(&self) -> bool {
        true
    }

    fn active_terms(&self) -> Vec<bool> {
        vec![true, true, false]
    }

    fn phi_bound(&self) -> Option<f64> {
        Some(std::f64::consts::SQRT_2)
    }
}

/// `dX = (E[X] - X E[X^2] + delta X) dt + X dW`.
#[derive(Debug, Clone)]
pub struct PolyDrift {
    delta: f64,
    horizon: f64,
    law: InitialLaw,
}

pub fn make_polydrift(x0: f64, delta: f64, horizon: f64) -> Result<PolyDrift> {
    check_horizon(horizon)?;
    Ok(PolyDrift { delta, horizon, law: InitialLaw::Dirac(vec![x0]) })
}

impl SeparableModel for PolyDrift {
    fn name(&self) -> &str {
        "polydrift"
    }

    fn dims(&self) -> Dims {
        Dims { state: 1, noise: 1, terms: 3 }
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial_law(&self) -> &InitialLaw {
        &self.law
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[1.0, -x[0], self.delta * x[0]]);
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[0.0, 0.0, x[0]]);
    }

    fn phi(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[x[0], x[0] * x[0], 1.0]);
    }

    fn phi_jacobian(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[1.0, 2.0 * x[0], 0.0]);
    }

    fn drift_state_derivative(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[0.0, -1.0, self.delta]);
    }

    fn diffusion_state_derivative(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[0.0, 0.0, 1.0]);
    }

    fn has_state_derivatives(&self) -> bool {
        true
    }

    fn active_terms(&self) -> Vec<bool> {
        vec![true, true, false]
    }
}

/// Hermite projection of the convolution dynamics
/// `dX = E[exp(-(X_t - x)^2/2)]|_{x = X_t} dt + sigma dW`, `X_0 ~ N(0, 1)`.
///
/// Terms `0..=k_trunc` carry `phi_k` (Hermite functions) against the kernel
/// coefficients `alpha_k`. One extra constant term (`phi == 1`, `alpha == 0`,
/// `beta == sigma`) holds the law-independent noise, so `K = k_trunc + 2`.
#[derive(Debug, Clone)]
pub struct ConvolutionProjected {
    hermite: HermiteSystem,
    sigma: f64,
    horizon: f64,
    law: InitialLaw,
}

pub fn make_convolution_projected(
    k_trunc: usize,
    sigma: f64,
    horizon: f64,
) -> Result<ConvolutionProjected> {
    check_horizon(horizon)?;
    if k_trunc == 0 {
        return Err(Error::invalid("k_trunc must be at least 1"));
    }
    Ok(ConvolutionProjected {
        hermite: HermiteSystem::new(k_trunc),
        sigma,
        horizon,
        law: InitialLaw::StandardGaussian,
    })
}

impl ConvolutionProjected {
    pub fn hermite(&self) -> &HermiteSystem {
        &self.hermite
    }
}

impl SeparableModel for ConvolutionProjected {
    fn name(&self) -> &str {
        "convolution"
    }

    fn dims(&self) -> Dims {
        Dims { state: 1, noise: 1, terms: self.hermite.len() + 1 }
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial_law(&self) -> &InitialLaw {
        &self.law
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let (herm, last) = out.split_at_mut(self.hermite.len());
        self.hermite.kernel_coefficients(x[0], herm);
        last[0] = 0.0;
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.hermite.len()] = self.sigma;
    }

    fn phi(&self, x: &[f64], out: &mut [f64]) {
        let (herm, last) = out.split_at_mut(self.hermite.len());
        self.hermite.functions(x[0], herm);
        last[0] = 1.0;
    }

    fn phi_jacobian(&self, x: &[f64], out: &mut [f64]) {
        let (herm, last) = out.split_at_mut(self.hermite.len());
        self.hermite.function_derivatives(x[0], herm);
        last[0] = 0.0;
    }

    fn drift_state_derivative(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let (herm, last) = out.split_at_mut(self.hermite.len());
        self.hermite.kernel_coefficient_derivatives(x[0], herm);
        last[0] = 0.0;
    }

    fn diffusion_state_derivative(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn has_state_derivatives(&self) -> bool {
        true
    }

    fn active_terms(&self) -> Vec<bool> {
        let mut active = vec![true; self.hermite.len() + 1];
        active[self.hermite.len()] = false;
        active
    }

    fn phi_bound(&self) -> Option<f64> {
        Some(self.hermite.function_norm_bound().hypot(1.0))
    }
}

/// `dX = E[X] dt`, `X_0 = x0`, whose curve is `x0 e^t`.
#[derive(Debug, Clone)]
pub struct LinearOracle {
    x0: f64,
    horizon: f64,
    law: InitialLaw,
}

pub fn make_linear_oracle(x0: f64, horizon: f64) -> Result<LinearOracle> {
    check_horizon(horizon)?;
    Ok(LinearOracle { x0, horizon, law: InitialLaw::Dirac(vec![x0]) })
}

impl LinearOracle {
    pub fn exact_curve(&self, t: f64) -> f64 {
        self.x0 * t.exp()
    }
}

impl SeparableModel for LinearOracle {
    fn name(&self) -> &str {
        "linear-oracle"
    }

    fn dims(&self) -> Dims {
        Dims { state: 1, noise: 1, terms: 1 }
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial_law(&self) -> &InitialLaw {
        &self.law
    }

    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn phi(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }

    fn phi_jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }

    fn drift_state_derivative(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn diffusion_state_derivative(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn has_state_derivatives(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn builtins() -> Vec<Box<dyn SeparableModel>> {
        vec![
            Box::new(make_kuramoto(0.5, 0.5, 0.5).unwrap()),
            Box::new(make_kuramoto(0.5, 0.5, 0.5).unwrap().without_drift()),
            Box::new(make_polydrift(1.0, 0.8, 0.1).unwrap()),
            Box::new(make_convolution_projected(10, 0.1, 1.0).unwrap()),
            Box::new(make_linear_oracle(1.0, 1.0).unwrap()),
        ]
    }

    #[test]
    fn kuramoto_values() {
        let m = make_kuramoto(0.5, 0.5, 0.5).unwrap();
        let mut out = [0.0; 3];
        m.phi(&[0.0], &mut out);
        assert_eq!(out, [0.0, 1.0, 1.0]);
        m.drift(0.1, &[FRAC_PI_2], &mut out);
        assert!(out[0].abs() < 1e-15);
        assert_eq!(out[1], -1.0);
        assert_eq!(out[2], 0.0);
        m.diffusion(0.0, &[3.0], &mut out);
        assert_eq!(out, [0.0, 0.0, 0.5]);
    }

    #[test]
    fn kuramoto_rejects_bad_horizon() {
        assert!(make_kuramoto(0.5, 0.5, 0.0).is_err());
        assert!(make_kuramoto(0.5, 0.5, -1.0).is_err());
        assert!(make_kuramoto(0.5, -0.1, 1.0).is_err());
    }

    #[test]
    fn polydrift_values() {
        let m = make_polydrift(1.0, 0.8, 0.1).unwrap();
        let mut out = [0.0; 3];
        m.phi(&[2.0], &mut out);
        assert_eq!(out, [2.0, 4.0, 1.0]);
        m.drift(0.0, &[1.0], &mut out);
        assert_eq!(out, [1.0, -1.0, 0.8]);
        m.phi_jacobian(&[3.0], &mut out);
        assert_eq!(out, [1.0, 6.0, 0.0]);
    }

    #[test]
    fn convolution_values_at_origin() {
        let m = make_convolution_projected(10, 0.1, 1.0).unwrap();
        assert_eq!(m.dims().terms, 12);
        let mut out = vec![0.0; 12];
        m.drift(0.0, &[0.0], &mut out);
        assert!((out[0] - 1.331_335_36).abs() < 1e-8);
        assert!(out[1..].iter().all(|&v| v == 0.0));
        m.phi(&[0.0], &mut out);
        assert!((out[0] - PI.powf(-0.25)).abs() < 1e-15);
        assert!((out[0] - 0.751_125_54).abs() < 1e-8);
        assert_eq!(out[11], 1.0);
        assert!(make_convolution_projected(0, 0.1, 1.0).is_err());
    }

    #[test]
    fn linear_oracle_curve() {
        let m = make_linear_oracle(1.0, 1.0).unwrap();
        assert_eq!(m.exact_curve(0.0), 1.0);
        assert!((m.exact_curve(1.0) - std::f64::consts::E).abs() < 1e-15);
        let zero = make_linear_oracle(0.0, 1.0).unwrap();
        assert_eq!(zero.exact_curve(0.7), 0.0);
    }

    #[test]
    fn dirac_law_is_exact() {
        let law = InitialLaw::Dirac(vec![0.25, -1.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut out = [0.0; 2];
        law.sample(&mut rng, &mut out);
        assert_eq!(out, [0.25, -1.5]);
    }

    #[test]
    fn gaussian_law_is_reproducible() {
        let law = InitialLaw::StandardGaussian;
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        law.sample(&mut ChaCha8Rng::seed_from_u64(9), &mut a);
        law.sample(&mut ChaCha8Rng::seed_from_u64(9), &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn shapes_and_finiteness_on_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in builtins() {
            let dims = m.dims();
            let mut alpha = vec![f64::NAN; dims.drift_len()];
            let mut beta = vec![f64::NAN; dims.diffusion_len()];
            let mut phi = vec![f64::NAN; dims.terms];
            let mut jac = vec![f64::NAN; dims.terms * dims.state];
            let mut dalpha = vec![f64::NAN; dims.drift_len() * dims.state];
            let mut dbeta = vec![f64::NAN; dims.diffusion_len() * dims.state];
            assert_eq!(m.active_terms().len(), dims.terms);
            for _ in 0..100 {
                let t = rng.random_range(0.0..=m.horizon());
                let x: Vec<f64> = (0..dims.state).map(|_| rng.random_range(-3.0..3.0)).collect();
                m.drift(t, &x, &mut alpha);
                m.diffusion(t, &x, &mut beta);
                m.phi(&x, &mut phi);
                m.phi_jacobian(&x, &mut jac);
                m.drift_state_derivative(t, &x, &mut dalpha);
                m.diffusion_state_derivative(t, &x, &mut dbeta);
                for v in alpha.iter().chain(&beta).chain(&phi).chain(&jac).chain(&dalpha).chain(&dbeta) {
                    assert!(v.is_finite(), "{} produced {v}", m.name());
                }
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let eps = FD_STATE_STEP;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for m in builtins() {
            let dims = m.dims();
            let k = dims.terms;
            let (mut jac, mut hi, mut lo) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
            let (mut da, mut dhi, mut dlo) =
                (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
            let (mut db, mut bhi, mut blo) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
            for _ in 0..100 {
                let x = rng.random_range(-3.0..=3.0);
                let t = rng.random_range(0.0..=m.horizon());
                m.phi_jacobian(&[x], &mut jac);
                m.phi(&[x + eps], &mut hi);
                m.phi(&[x - eps], &mut lo);
                m.drift_state_derivative(t, &[x], &mut da);
                m.drift(t, &[x + eps], &mut dhi);
                m.drift(t, &[x - eps], &mut dlo);
                m.diffusion_state_derivative(t, &[x], &mut db);
                m.diffusion(t, &[x + eps], &mut bhi);
                m.diffusion(t, &[x - eps], &mut blo);
                for j in 0..k {
                    assert!((jac[j] - (hi[j] - lo[j]) / (2.0 * eps)).abs() <= 10.0 * eps);
                    assert!((da[j] - (dhi[j] - dlo[j]) / (2.0 * eps)).abs() <= 10.0 * eps);
                    assert!((db[j] - (bhi[j] - blo[j]) / (2.0 * eps)).abs() <= 10.0 * eps);
                }
            }
        }
    }

    struct NoDerivatives {
        law: InitialLaw,
    }

    impl SeparableModel for NoDerivatives {
        fn name(&self) -> &str {
            "custom"
        }
        fn dims(&self) -> Dims {
            Dims { state: 2, noise: 1, terms: 1 }
        }
        fn horizon(&self) -> f64 {
            1.0
        }
        fn initial_law(&self) -> &InitialLaw {
            &self.law
        }
        fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] * x[1];
            out[1] = x[1].sin();
        }
        fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
            out[0] = x[0];
            out[1] = 0.0;
        }
        fn phi(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0];
        }
        fn phi_jacobian(&self, _x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&[1.0, 0.0]);
        }
    }

    #[test]
    fn fallback_state_derivatives() {
        let m = NoDerivatives { law: InitialLaw::StandardGaussian };
        assert!(!m.has_state_derivatives());
        let x = [0.3, -1.2];
        let mut out = [0.0; 4];
        m.drift_state_derivative(0.0, &x, &mut out);
        // [d a0/dz0, d a0/dz1, d a1/dz0, d a1/dz1]
        let expected = [x[1], x[0], 0.0, x[1].cos()];
        for (o, e) in out.iter().zip(&expected) {
            assert!((o - e).abs() < 1e-8);
        }
        m.diffusion_state_derivative(0.0, &x, &mut out);
        let expected = [1.0, 0.0, 0.0, 0.0];
        for (o, e) in out.iter().zip(&expected) {
            assert!((o - e).abs() < 1e-8);
        }
    }
}
