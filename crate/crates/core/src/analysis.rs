//! Error metrics on the simulation grid, Hermite projection helpers and
//! density reconstruction for the convolution model.

use crate::curve::GammaCurve;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
pub use crate::hermite::HermiteSystem;

/// Weight `w(t) = c1 exp(c2 t)` for the time integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightKernel {
    pub c1: f64,
    pub c2: f64,
}

impl WeightKernel {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1.is_finite() && c2.is_finite()) {
            return Err(Error::invalid(format!("weight needs c1 > 0 and finite c2, got ({c1}, {c2})")));
        }
        Ok(WeightKernel { c1, c2 })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.c1 * (self.c2 * t).exp()
    }
}

/// Trapezoid weights `w(t_i) h`, halved at `t_0` and `t_N`, for
/// `i = 0..=steps`.
///
/// The end point has to be included: with a left-endpoint rule the top
/// Chebyshev node can fall past the last quadrature point (for example
/// `T = 0.1`, `h = 0.01`, `n = 3`), which leaves the objective nearly flat
/// along one direction and slows SGD down by almost an order of magnitude.
pub fn quadrature_weights(grid: &TimeGrid, weight: Option<WeightKernel>) -> Vec<f64> {
    let h = grid.step();
    let last = grid.steps();
    (0..=last)
        .map(|i| {
            let end = if i == 0 || i == last { 0.5 } else { 1.0 };
            end * h * weight.map_or(1.0, |w| w.eval(grid.time(i)))
        })
        .collect()
}

fn check_mask(terms: usize, active: &[bool]) -> Result<()> {
    if active.len() != terms {
        return Err(Error::Shape(format!("mask of length {} for {terms} components", active.len())));
    }
    Ok(())
}

/// Discrete `L^2_T` norm of the active components of `values`
/// (`(steps + 1) x K`, row-major).
pub fn l2_norm_on_grid(
    values: &[f64],
    grid: &TimeGrid,
    weight: Option<WeightKernel>,
    active: &[bool],
) -> Result<f64> {
    let terms = active.len();
    if values.len() != grid.len() * terms {
        return Err(Error::Shape(format!(
            "{} values for {} grid points and {terms} components",
            values.len(),
            grid.len()
        )));
    }
    let mut sum = 0.0;
    for (i, wi) in quadrature_weights(grid, weight).into_iter().enumerate() {
        let row = &values[i * terms..(i + 1) * terms];
        let sq: f64 = row.iter().zip(active).filter(|(_, &on)| on).map(|(v, _)| v * v).sum();
        sum += wi * sq;
    }
    Ok(sum.sqrt())
}

/// `||candidate - benchmark|| / ||benchmark||` from tabulated values.
pub fn relative_error_values(
    candidate: &[f64],
    benchmark: &[f64],
    grid: &TimeGrid,
    weight: Option<WeightKernel>,
    active: &[bool],
) -> Result<f64> {
    if candidate.len() != benchmark.len() {
        return Err(Error::Shape("candidate and benchmark differ in size".into()));
    }
    let denom = l2_norm_on_grid(benchmark, grid, weight, active)?;
    if denom == 0.0 {
        return Err(Error::UndefinedRelativeError);
    }
    let diff: Vec<f64> = candidate.iter().zip(benchmark).map(|(c, b)| c - b).collect();
    Ok(l2_norm_on_grid(&diff, grid, weight, active)? / denom)
}

/// Relative discrete `L^2_T` error of `candidate` against `benchmark`,
/// counting only the components flagged in `active`.
pub fn relative_error(
    candidate: &GammaCurve,
    benchmark: &GammaCurve,
    grid: &TimeGrid,
    weight: Option<WeightKernel>,
    active: &[bool],
) -> Result<f64> {
    check_mask(candidate.terms(), active)?;
    check_mask(benchmark.terms(), active)?;
    relative_error_values(&candidate.on_grid(grid)?, &benchmark.on_grid(grid)?, grid, weight, active)
}

/// `w(x) = sum_k gamma_k phi_k(x)` on `xs`. Negative values are kept.
pub fn density_reconstruct(system: &HermiteSystem, gamma_at_t: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
    if gamma_at_t.len() != system.len() {
        return Err(Error::Shape(format!(
            "{} coefficients for {} Hermite functions",
            gamma_at_t.len(),
            system.len()
        )));
    }
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("density grid point {x} is not finite")));
    }
    let mut phi = vec![0.0; system.len()];
    Ok(xs
        .iter()
        .map(|&x| {
            system.functions(x, &mut phi);
            phi.iter().zip(gamma_at_t).map(|(p, g)| p * g).sum()
        })
        .collect())
}

/// `(alpha_0(x), ..., alpha_K(x))`, the Hermite coefficients of `y -> exp(-(y - x)^2 / 2)`.
pub fn project_kernel(system: &HermiteSystem, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; system.len()];
    system.kernel_coefficients(x, &mut out);
    out
}
