use crate::error::{Error, Result};

/// Uniform grid `t_i = i h`, `i = 0..=steps`, with `steps * h = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    step: f64,
}

impl TimeGrid {
    /// Grid of step `h` on `[0, T]`. `T / h` must be an integer up to
    /// rounding; the stored step is then recomputed as `T / steps`.
    pub fn new(horizon: f64, h: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {h}")));
        }
        let ratio = horizon / h;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps > u32::MAX as f64 {
            return Err(Error::invalid(format!(
                "time step {h} does not divide horizon {horizon} into whole steps"
            )));
        }
        TimeGrid::with_steps(horizon, steps as usize)
    }

    pub fn with_steps(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("a time grid needs at least one step"));
        }
        Ok(TimeGrid { horizon, steps, step: horizon / steps as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of grid points, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.step
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }
}
