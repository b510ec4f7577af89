//! Finite-dimensional projection of the curve space: Chebyshev nodes,
//! Lagrange basis, the lifting operator, and the clamp/penalty pair.

mod clamp;
mod lagrange;
mod penalty;

pub use clamp::ClampSpec;
pub use lagrange::{chebyshev_nodes, CoeffMatrix, LagrangeBasis};
pub use penalty::PenaltySpec;

use crate::curve::GammaCurve;
use crate::error::Result;

/// Interpolates `curve` at the basis nodes; `lift` of the result reproduces
/// the curve at every node.
pub fn interpolate_curve(basis: &LagrangeBasis, curve: &GammaCurve) -> Result<CoeffMatrix> {
    let mut failure = None;
    let a = basis.interpolate_fn(|t| match curve.eval(t) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            vec![0.0; curve.terms()]
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(a),
    }
}
