//! Bregman projections onto affine sets, by damped Newton on the dual.
//!
//! For `min D_ψ(w, w₀) s.t. A w = b` the optimum is `w = ∇ψ*(z₀ + Aᵀν)` with
//! `z₀ = ∇ψ(w₀)`, where `ν` minimizes the convex dual
//! `Φ(ν) = ψ*(z₀ + Aᵀν) − νᵀb`, whose gradient is the constraint residual.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Potential;
use crate::linalg::{solve_spd, SpanProjector};
use crate::problems::Dataset;

/// Convex conjugate with the derivatives the Newton solver needs.
pub(crate) trait Conjugate {
    fn value(&self, z: &DVector<f64>) -> Result<f64>;
    fn grad(&self, z: &DVector<f64>) -> Result<DVector<f64>>;
    fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>>;
}

impl Conjugate for Potential {
    fn value(&self, z: &DVector<f64>) -> Result<f64> {
        self.conjugate_value(z)
    }
    fn grad(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.grad_inverse(z)
    }
    fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.conjugate_hessian(z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DualSolution {
    pub nu: DVector<f64>,
    pub w: DVector<f64>,
    pub residual: f64,
}

/// Solves `A ∇ψ*(z₀ + Aᵀν) = b` for `ν`.
pub(crate) fn solve_dual<C: Conjugate + ?Sized>(
    conj: &C,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z0: &DVector<f64>,
    tol: f64,
) -> Result<DualSolution> {
    let m = a.nrows();
    let mut nu = DVector::zeros(m);
    let eval = |nu: &DVector<f64>| -> Option<(f64, DVector<f64>, DVector<f64>)> {
        let z = z0 + a.tr_mul(nu);
        let phi = conj.value(&z).ok()? - nu.dot(b);
        let w = conj.grad(&z).ok()?;
        (phi.is_finite() && w.iter().all(|x| x.is_finite())).then_some((phi, w, z))
    };
    let Some((mut phi, mut w, mut z)) = eval(&nu) else {
        return Err(Error::NonConvergence {
            solver: "bregman projection".into(),
            residual: f64::INFINITY,
        });
    };
    let scale = 1.0 + b.amax();
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..500 {
        let f = a * &w - b;
        let res = f.amax();
        if res <= tol * scale {
            return Ok(DualSolution {
                nu,
                w,
                residual: res,
            });
        }
        if res < best * 0.999 {
            best = res;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 40 {
                break;
            }
        }
        let h = a * conj.hessian(&z)? * a.transpose();
        let dir = -solve_spd(&h, &f)?;
        let slope = f.dot(&dir);
        let dir = if slope < 0.0 { dir } else { -f.clone() };
        let slope = f.dot(&dir);
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &nu + &dir * s;
            if let Some((p, wt, zt)) = eval(&trial) {
                if p <= phi + 1e-4 * s * slope || (p - phi).abs() <= 1e-15 * phi.abs().max(1.0) {
                    nu = trial;
                    phi = p;
                    w = wt;
                    z = zt;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let res = (a * &w - b).amax();
    if res <= tol * scale {
        return Ok(DualSolution {
            nu,
            w,
            residual: res,
        });
    }
    Err(Error::NonConvergence {
        solver: "bregman projection".into(),
        residual: res,
    })
}

/// Projection onto `{A w = b}` started from a dual point.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineProjection {
    pub w: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub residual: f64,
}

/// `argmin_{A w = b} D_ψ(w, ∇ψ*(z_ref))`.
pub fn project_affine_dual(
    potential: &Potential,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z_ref: &DVector<f64>,
) -> Result<AffineProjection> {
    let sol = solve_dual(potential, a, b, z_ref, 1e-13)?;
    Ok(AffineProjection {
        w: sol.w,
        multipliers: sol.nu,
        residual: sol.residual,
    })
}

/// `argmin_{A w = b} D_ψ(w, w₀)`.
pub fn project_affine(
    potential: &Potential,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    w0: &DVector<f64>,
) -> Result<AffineProjection> {
    project_affine_dual(potential, a, b, &potential.grad(w0)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BregmanProjectionResult {
    pub w_star: DVector<f64>,
    pub dual_coefficients: DVector<f64>,
    pub stationarity_residual: f64,
    pub feasibility_residual: f64,
}

/// Residual tolerance a projection must meet.
pub const PROJECTION_TOL: f64 = 1e-8;

/// `argmin_{w : ⟨w, x_n⟩ = y_n} D_ψ(w, w₀)`, optionally with extra affine rows
/// `G w = h` stacked under the data constraints.
pub fn bregman_projection_with(
    potential: &Potential,
    ds: &Dataset,
    extra: Option<(&DMatrix<f64>, &DVector<f64>)>,
    w0: &DVector<f64>,
) -> Result<BregmanProjectionResult> {
    ds.check_dim(w0)?;
    let (a, b) = stack(ds, extra)?;
    let z0 = potential.grad(w0)?;
    let proj = project_affine_dual(potential, &a, &b, &z0)?;
    let stationarity = (potential.grad(&proj.w)? - &z0 - a.tr_mul(&proj.multipliers)).norm();
    let feasibility = if a.nrows() == 0 {
        0.0
    } else {
        (&a * &proj.w - &b).amax()
    };
    if stationarity > PROJECTION_TOL || feasibility > PROJECTION_TOL {
        return Err(Error::NonConvergence {
            solver: "bregman projection".into(),
            residual: stationarity.max(feasibility),
        });
    }
    Ok(BregmanProjectionResult {
        w_star: proj.w,
        dual_coefficients: proj.multipliers,
        stationarity_residual: stationarity,
        feasibility_residual: feasibility,
    })
}

pub fn bregman_projection(
    potential: &Potential,
    ds: &Dataset,
    w0: &DVector<f64>,
) -> Result<BregmanProjectionResult> {
    bregman_projection_with(potential, ds, None, w0)
}

fn stack(
    ds: &Dataset,
    extra: Option<(&DMatrix<f64>, &DVector<f64>)>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let Some((g, h)) = extra else {
        return Ok((ds.features().clone(), ds.labels().clone()));
    };
    if g.ncols() != ds.dim() || g.nrows() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: g.ncols(),
        });
    }
    let n = ds.n_examples();
    let mut a = DMatrix::zeros(n + g.nrows(), ds.dim());
    a.rows_mut(0, n).copy_from(ds.features());
    a.rows_mut(n, g.nrows()).copy_from(g);
    let mut b = DVector::zeros(n + h.len());
    b.rows_mut(0, n).copy_from(ds.labels());
    b.rows_mut(n, h.len()).copy_from(h);
    Ok((a, b))
}

/// KKT residuals of `w` as a candidate projection of `w₀`: the norm of the
/// part of `∇ψ(w) − ∇ψ(w₀)` off the constraint rows' span, and the largest
/// constraint violation.
pub fn kkt_residual_with(
    potential: &Potential,
    ds: &Dataset,
    extra: Option<(&DMatrix<f64>, &DVector<f64>)>,
    w0: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<(f64, f64)> {
    let (a, b) = stack(ds, extra)?;
    let diff = potential.grad(w)? - potential.grad(w0)?;
    let stationarity = SpanProjector::from_rows(&a).residual_norm(&diff);
    let feasibility = if a.nrows() == 0 {
        0.0
    } else {
        (&a * w - &b).amax()
    };
    Ok((stationarity, feasibility))
}

pub fn kkt_residual(
    potential: &Potential,
    ds: &Dataset,
    w0: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<(f64, f64)> {
    kkt_residual_with(potential, ds, None, w0, w)
}
