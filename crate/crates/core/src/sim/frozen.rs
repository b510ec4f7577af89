use crate::basis::{ClampSpec, CoeffMatrix, LagrangeBasis};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// The curve `h((L a)(t))` tabulated on a time grid, together with the
/// basis values `g_h(t_i)` and the clamp Jacobian needed by the tangent
/// system. Built once per SGD iterate and shared by every sample.
#[derive(Debug, Clone)]
pub struct FrozenCurve {
    grid: TimeGrid,
    terms: usize,
    basis_len: usize,
    basis_values: Vec<f64>,
    lifted: Vec<f64>,
    clamped: Vec<f64>,
    jacobian: Option<Vec<f64>>,
}

impl FrozenCurve {
    pub fn new(
        basis: &LagrangeBasis,
        a: &CoeffMatrix,
        clamp: &ClampSpec,
        grid: &TimeGrid,
    ) -> Result<Self> {
        if (basis.horizon() - grid.horizon()).abs() > 1e-12 * grid.horizon() {
            return Err(Error::Shape(format!(
                "basis horizon {} differs from grid horizon {}",
                basis.horizon(),
                grid.horizon()
            )));
        }
        if a.rows() != basis.len() {
            return Err(Error::Shape(format!(
                "coefficient matrix has {} rows, basis has {}",
                a.rows(),
                basis.len()
            )));
        }
        let terms = a.cols();
        let basis_len = basis.len();
        let points = grid.len();
        let mut basis_values = vec![0.0; points * basis_len];
        let mut lifted = vec![0.0; points * terms];
        for (i, t) in grid.times().enumerate() {
            let g = &mut basis_values[i * basis_len..(i + 1) * basis_len];
            basis.eval_into(t, g)?;
            let out = &mut lifted[i * terms..(i + 1) * terms];
            for (h, gh) in g.iter().enumerate() {
                for (o, v) in out.iter_mut().zip(a.row(h)) {
                    *o += gh * v;
                }
            }
        }
        let (clamped, jacobian) = if clamp.is_identity() {
            (lifted.clone(), None)
        } else {
            let mut clamped = vec![0.0; points * terms];
            let mut jac = vec![0.0; points * terms * terms];
            for i in 0..points {
                clamp.apply(
                    &lifted[i * terms..(i + 1) * terms],
                    &mut clamped[i * terms..(i + 1) * terms],
                    &mut jac[i * terms * terms..(i + 1) * terms * terms],
                );
            }
            (clamped, Some(jac))
        };
        Ok(FrozenCurve { grid: *grid, terms, basis_len, basis_values, lifted, clamped, jacobian })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn basis_len(&self) -> usize {
        self.basis_len
    }

    /// `g_0(t_i), ..., g_n(t_i)`.
    pub fn basis_at(&self, i: usize) -> &[f64] {
        &self.basis_values[i * self.basis_len..(i + 1) * self.basis_len]
    }

    /// `(L a)(t_i)` before clamping.
    pub fn lifted_at(&self, i: usize) -> &[f64] {
        &self.lifted[i * self.terms..(i + 1) * self.terms]
    }

    /// All lifted values, `(steps + 1) x K`.
    pub fn lifted(&self) -> &[f64] {
        &self.lifted
    }

    /// `h((L a)(t_i))`, the weights that drive the SDE.
    pub fn gamma_at(&self, i: usize) -> &[f64] {
        &self.clamped[i * self.terms..(i + 1) * self.terms]
    }

    /// Clamp Jacobian at `t_i`, `None` for the identity clamp.
    pub fn jacobian_at(&self, i: usize) -> Option<&[f64]> {
        let kk = self.terms * self.terms;
        self.jacobian.as_ref().map(|j| &j[i * kk..(i + 1) * kk])
    }
}
