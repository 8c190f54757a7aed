//! Mirror-descent potentials and steepest-descent norms.

mod exponent;
mod norm;
mod potential;

pub use exponent::Exponent;
pub use norm::{coordinate_direction, Norm, SpdMatrix, TieRule, TIE_TOLERANCE};
pub(crate) use potential::half_sq_lp_hessian;
pub use potential::Potential;

use nalgebra::DVector;

use crate::error::Result;

pub fn bregman_divergence(
    potential: &Potential,
    w: &DVector<f64>,
    w_ref: &DVector<f64>,
) -> Result<f64> {
    potential.bregman_divergence(w, w_ref)
}

pub fn duality_map(norm: &Norm, g: &DVector<f64>) -> DVector<f64> {
    norm.duality_map(g)
}
