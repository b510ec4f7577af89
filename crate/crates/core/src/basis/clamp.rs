use crate::error::{Error, Result};

/// The bounded map applied to the lifted curve before it enters the SDE.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ClampSpec {
    #[default]
    Identity,
    /// Radial clamp: identity for `|y| <= radius - smoothing`, constant norm
    /// `radius` for `|y| >= radius + smoothing`, and a quadratic C1 blend in
    /// between.
    Ball { radius: f64, smoothing: f64 },
}

impl ClampSpec {
    /// Ball clamp with the default smoothing width of 10% of the radius.
    pub fn ball(radius: f64) -> Result<Self> {
        ClampSpec::ball_with_smoothing(radius, 0.1 * radius)
    }

    pub fn ball_with_smoothing(radius: f64, smoothing: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("clamp radius must be positive, got {radius}")));
        }
        if !(smoothing > 0.0 && smoothing <= radius) {
            return Err(Error::invalid(format!(
                "clamp smoothing must lie in (0, radius], got {smoothing}"
            )));
        }
        Ok(ClampSpec::Ball { radius, smoothing })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ClampSpec::Identity)
    }

    /// Writes the clamped value into `value` and its Jacobian
    /// (`jac[k*K + j] = d value_k / d y_j`) into `jac`.
    pub fn apply(&self, y: &[f64], value: &mut [f64], jac: &mut [f64]) {
        let k = y.len();
        debug_assert_eq!(value.len(), k);
        debug_assert_eq!(jac.len(), k * k);
        value.copy_from_slice(y);
        jac.fill(0.0);
        for i in 0..k {
            jac[i * k + i] = 1.0;
        }
        let ClampSpec::Ball { radius, smoothing } = *self else {
            return;
        };
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let inner = radius - smoothing;
        if r <= inner || r == 0.0 {
            return;
        }
        let (s, ds) = if r >= radius + smoothing {
            (radius, 0.0)
        } else {
            let u = r - inner;
            (r - u * u / (4.0 * smoothing), 1.0 - u / (2.0 * smoothing))
        };
        let ratio = s / r;
        for (v, yi) in value.iter_mut().zip(y) {
            *v = yi * ratio;
        }
        let radial = ds - ratio;
        for i in 0..k {
            for j in 0..k {
                let diag = if i == j { ratio } else { 0.0 };
                jac[i * k + j] = diag + radial * y[i] * y[j] / (r * r);
            }
        }
    }

    pub fn clamp(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut value = vec![0.0; y.len()];
        let mut jac = vec![0.0; y.len() * y.len()];
        self.apply(y, &mut value, &mut jac);
        (value, jac)
    }
}
