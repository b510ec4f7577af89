use super::lagrange::CoeffMatrix;
use crate::error::{Error, Result};

/// Coercive regulariser `H(a)` added to the projected objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PenaltySpec {
    #[default]
    Zero,
    /// `H(a) = (|a| - rho)_+^2`.
    Quadratic { rho: f64 },
}

impl PenaltySpec {
    pub fn quadratic(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(format!("penalty radius must be positive, got {rho}")));
        }
        Ok(PenaltySpec::Quadratic { rho })
    }

    /// `2 sup|phi| sqrt(rows)`: with `rows = n + 1`, the constant curves
    /// taking values in the range of `phi` lie well inside the ball.
    pub fn default_radius(phi_bound: f64, rows: usize) -> f64 {
        2.0 * phi_bound * (rows as f64).sqrt()
    }

    /// Value and gradient over all entries of `a`.
    pub fn evaluate(&self, a: &CoeffMatrix) -> (f64, CoeffMatrix) {
        self.evaluate_masked(a, &vec![true; a.cols()])
    }

    /// Value and gradient with only the columns flagged in `active` treated
    /// as parameters; frozen columns neither enter `|a|` nor receive gradient.
    pub fn evaluate_masked(&self, a: &CoeffMatrix, active: &[bool]) -> (f64, CoeffMatrix) {
        let mut grad = CoeffMatrix::zeros(a.rows(), a.cols());
        let PenaltySpec::Quadratic { rho } = *self else {
            return (0.0, grad);
        };
        let entries = || {
            (0..a.rows()).flat_map(move |h| (0..a.cols()).map(move |j| (h, j)))
                .filter(|&(_, j)| active[j])
        };
        let norm = entries().map(|(h, j)| a.get(h, j).powi(2)).sum::<f64>().sqrt();
        let excess = norm - rho;
        if excess <= 0.0 {
            return (0.0, grad);
        }
        let scale = 2.0 * excess / norm;
        for (h, j) in entries() {
            grad.set(h, j, scale * a.get(h, j));
        }
        (excess * excess, grad)
    }
}
