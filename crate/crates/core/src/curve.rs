use crate::basis::{CoeffMatrix, LagrangeBasis};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Values of a `K`-dimensional curve at every point of a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    grid: TimeGrid,
    terms: usize,
    values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(grid: TimeGrid, terms: usize, values: Vec<f64>) -> Result<Self> {
        if terms == 0 {
            return Err(Error::Shape("a curve needs at least one component".into()));
        }
        if values.len() != grid.len() * terms {
            return Err(Error::Shape(format!(
                "{} values for {} grid points x {terms} components",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("curve values must be finite"));
        }
        Ok(SampledCurve { grid, terms, values })
    }

    pub fn from_fn<F>(grid: TimeGrid, terms: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(grid.len() * terms);
        for t in grid.times() {
            let v = f(t);
            if v.len() != terms {
                return Err(Error::Shape(format!("curve returned {} components, expected {terms}", v.len())));
            }
            values.extend(v);
        }
        SampledCurve::new(grid, terms, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at grid index `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.terms..(i + 1) * self.terms]
    }

    /// Exact at grid points, piecewise linear in between.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let horizon = self.grid.horizon();
        if t.is_nan() || t < -1e-12 * horizon || t > horizon * (1.0 + 1e-12) {
            return Err(Error::OutOfDomain { t, horizon });
        }
        let pos = (t / self.grid.step()).clamp(0.0, self.grid.steps() as f64);
        let i = (pos.floor() as usize).min(self.grid.steps() - 1);
        let w = pos - i as f64;
        if w == 0.0 {
            return Ok(self.at(i).to_vec());
        }
        if w == 1.0 {
            return Ok(self.at(i + 1).to_vec());
        }
        Ok(self.at(i).iter().zip(self.at(i + 1)).map(|(a, b)| a + w * (b - a)).collect())
    }
}

/// A candidate or reference curve `gamma(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaCurve {
    Lifted { basis: LagrangeBasis, coeffs: CoeffMatrix },
    Sampled(SampledCurve),
}

impl GammaCurve {
    pub fn lifted(basis: LagrangeBasis, coeffs: CoeffMatrix) -> Result<Self> {
        if coeffs.rows() != basis.len() {
            return Err(Error::Shape(format!(
                "coefficient matrix has {} rows, basis has {}",
                coeffs.rows(),
                basis.len()
            )));
        }
        Ok(GammaCurve::Lifted { basis, coeffs })
    }

    pub fn terms(&self) -> usize {
        match self {
            GammaCurve::Lifted { coeffs, .. } => coeffs.cols(),
            GammaCurve::Sampled(s) => s.terms(),
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        match self {
            GammaCurve::Lifted { basis, coeffs } => basis.lift(coeffs, t),
            GammaCurve::Sampled(s) => s.eval(t),
        }
    }

    /// Row-major `(steps + 1) x K` values on `grid`.
    pub fn on_grid(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        if let GammaCurve::Sampled(s) = self {
            if s.grid() == grid {
                return Ok(s.values().to_vec());
            }
        }
        let mut out = Vec::with_capacity(grid.len() * self.terms());
        for t in grid.times() {
            out.extend(self.eval(t)?);
        }
        Ok(out)
    }
}

impl From<SampledCurve> for GammaCurve {
    fn from(s: SampledCurve) -> Self {
        GammaCurve::Sampled(s)
    }
}
