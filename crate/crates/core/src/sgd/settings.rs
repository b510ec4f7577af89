use crate::analysis::WeightKernel;
use crate::basis::CoeffMatrix;
use crate::error::{Error, Result};

/// How `a_0` is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitMode {
    /// `phi(x)` for one draw `x` of the initial law, repeated on every row,
    /// so that `L a_0` is the constant curve `phi(x)`.
    #[default]
    PhiOfInitialDraw,
    Explicit(CoeffMatrix),
}

/// Moving-average plateau rule for runs without a tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauRule {
    pub window: usize,
    pub rel_change: f64,
}

impl Default for PlateauRule {
    fn default() -> Self {
        PlateauRule { window: 20, rel_change: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub r0: f64,
    /// Learning-rate exponent, in `(0.5, 1]`.
    pub rho: f64,
    /// Minibatch size `M`.
    pub batch: usize,
    pub max_iter: usize,
    /// Stop once `epsilon_m < tol`; needs a benchmark.
    pub tol: Option<f64>,
    pub weight: Option<WeightKernel>,
    pub init: InitMode,
    /// Per-term mask; `None` uses the model's own.
    pub active: Option<Vec<bool>>,
    /// Consulted only when `tol` is `None`.
    pub plateau: Option<PlateauRule>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            r0: 1.0,
            rho: 0.7,
            batch: 1,
            max_iter: 1000,
            tol: Some(0.01),
            weight: None,
            init: InitMode::default(),
            active: None,
            plateau: Some(PlateauRule::default()),
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::invalid(format!("r0 must be positive, got {}", self.r0)));
        }
        if !(self.rho > 0.5 && self.rho <= 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0.5, 1], got {}", self.rho)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("minibatch size must be at least 1"));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::invalid(format!("tol must be positive, got {tol}")));
            }
        }
        if let Some(p) = self.plateau {
            if p.window == 0 || p.rel_change.is_nan() || p.rel_change <= 0.0 {
                return Err(Error::invalid("plateau rule needs a window >= 1 and a positive threshold"));
            }
        }
        Ok(())
    }
}

/// `eta_m = r0 / (m + 1)^rho`.
pub fn learning_rate(cfg: &SgdConfig, m: usize) -> f64 {
    cfg.r0 / ((m + 1) as f64).powf(cfg.rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let cfg = SgdConfig { r0: 5.0, rho: 0.7, ..SgdConfig::default() };
        assert_eq!(learning_rate(&cfg, 0), 5.0);
        assert!((learning_rate(&cfg, 1) - 5.0 / 2f64.powf(0.7)).abs() < 1e-15);
        assert!((learning_rate(&cfg, 1) - 3.07786).abs() < 1e-5);
    }

    #[test]
    fn harmonic_schedule_robbins_monro() {
        let cfg = SgdConfig { r0: 1.0, rho: 1.0, ..SgdConfig::default() };
        let mut s = 0.0;
        let mut s2 = 0.0;
        for m in 0..1_000_000 {
            let eta = learning_rate(&cfg, m);
            s += eta;
            s2 += eta * eta;
        }
        assert!(s > 14.0);
        assert!(s2 <= std::f64::consts::PI.powi(2) / 6.0);
    }

    #[test]
    fn validation() {
        assert!(SgdConfig::default().validate().is_ok());
        for bad in [
            SgdConfig { r0: 0.0, ..SgdConfig::default() },
            SgdConfig { rho: 0.5, ..SgdConfig::default() },
            SgdConfig { rho: 1.1, ..SgdConfig::default() },
            SgdConfig { batch: 0, ..SgdConfig::default() },
            SgdConfig { tol: Some(-1.0), ..SgdConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
