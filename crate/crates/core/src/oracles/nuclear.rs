//! Nuclear-norm maximum margin over PSD matrices and the stationarity
//! certificate for factored iterates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym;
use crate::problems::generate::rng;
use crate::problems::{Loss, MatrixDataset};

const ADMM_TOL: f64 = 1e-10;
const ADMM_MAX_ITERATIONS: usize = 100_000;
const DEGENERATE_PERTURBATION: f64 = 1e-5;
const DEGENERATE_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuclearCertificate {
    /// PSD maximizer with unit trace (unit nuclear norm).
    #[serde(rename = "direction")]
    pub w_star: DMatrix<f64>,
    /// `w_star / γ`: the minimum-trace PSD matrix with all margins at least 1.
    pub w_min_norm: DMatrix<f64>,
    pub gamma: f64,
    pub support: Vec<usize>,
    #[serde(rename = "alpha")]
    pub dual_coefficients: DVector<f64>,
    pub degenerate: bool,
    /// `max_n α_n (y_n⟨W_min, X_n⟩ − 1)`.
    pub complementary_slackness: f64,
    pub iterations: usize,
}

fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Symmetric vectorization preserving the Frobenius inner product.
fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    let mut v = DVector::zeros(svec_len(d));
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            v[k] = if i == j {
                m[(i, i)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)])
            };
            k += 1;
        }
    }
    v
}

fn smat(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                m[(i, j)] = v[k] / std::f64::consts::SQRT_2;
                m[(j, i)] = m[(i, j)];
            }
            k += 1;
        }
    }
    m
}

fn psd_projection(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = sym(m).symmetric_eigen();
    let lam = e.eigenvalues.map(|x| x.max(0.0));
    &e.eigenvectors * DMatrix::from_diagonal(&lam) * e.eigenvectors.transpose()
}

struct AdmmSolution {
    w: DMatrix<f64>,
    alpha: DVector<f64>,
    iterations: usize,
}

/// ADMM for `max t s.t. ⟨A_n, W⟩ ≥ t, tr W = 1, W ⪰ 0` with `A_n = y_n X_n`,
/// optionally adding `−⟨tilt, W⟩` to the objective. The affine block
/// `(w, t)` is split from the PSD copy `V` and the slacks `s ≥ 0`.
fn admm(ds: &MatrixDataset, tilt: Option<&DMatrix<f64>>) -> Result<AdmmSolution> {
    let d = ds.dim();
    let n = ds.n_examples();
    let m = svec_len(d);
    let mut g = DMatrix::zeros(n, m);
    for (r, x) in ds.features().iter().enumerate() {
        g.row_mut(r)
            .copy_from(&(svec(x) * ds.labels()[r]).transpose());
    }
    let c = svec(&DMatrix::identity(d, d));
    let lin = tilt.map_or(DVector::zeros(m), svec);
    let ones = DVector::from_element(n, 1.0);
    let kkt = |rho: f64| {
        let k = m + 2;
        let mut a = DMatrix::zeros(k, k);
        let gtg = g.tr_mul(&g);
        let gt1 = g.tr_mul(&ones);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = rho * (gtg[(i, j)] + if i == j { 1.0 } else { 0.0 });
            }
            a[(i, m)] = -rho * gt1[i];
            a[(m, i)] = -rho * gt1[i];
            a[(i, m + 1)] = c[i];
            a[(m + 1, i)] = c[i];
        }
        a[(m, m)] = rho * n as f64;
        a.lu()
    };
    let mut rho = 1.0;
    let mut lu = kkt(rho);
    let mut v = c.clone() / d as f64;
    let mut s = DVector::zeros(n);
    let mut u1 = DVector::zeros(m);
    let mut u2 = DVector::zeros(n);
    let mut w = v.clone();
    for it in 1..=ADMM_MAX_ITERATIONS {
        let mut rhs = DVector::zeros(m + 2);
        let top = (&v - &u1) * rho + g.tr_mul(&(&s - &u2)) * rho - &lin;
        rhs.rows_mut(0, m).copy_from(&top);
        rhs[m] = 1.0 - rho * (&s - &u2).sum();
        rhs[m + 1] = 1.0;
        let x = lu.solve(&rhs).ok_or_else(|| Error::NonConvergence {
            solver: "nuclear margin".into(),
            residual: f64::INFINITY,
        })?;
        w = x.rows(0, m).into_owned();
        let t = x[m];
        let v_prev = v.clone();
        let s_prev = s.clone();
        v = svec(&psd_projection(&smat(&(&w + &u1), d)));
        let gw = &g * &w - &ones * t;
        s = (&gw + &u2).map(|x| x.max(0.0));
        let r1 = &w - &v;
        let r2 = &gw - &s;
        u1 += &r1;
        u2 += &r2;
        let primal = r1.norm().max(r2.norm());
        let dual = rho * (&v - &v_prev).norm().max((&s - &s_prev).norm());
        if primal <= ADMM_TOL && dual <= ADMM_TOL {
            return Ok(AdmmSolution {
                w: smat(&v, d),
                alpha: -&u2 * rho,
                iterations: it,
            });
        }
        if it % 50 == 0 && (primal > 10.0 * dual || dual > 10.0 * primal) {
            let f = if primal > dual { 2.0 } else { 0.5 };
            rho *= f;
            u1 /= f;
            u2 /= f;
            lu = kkt(rho);
        }
    }
    Err(Error::NonConvergence {
        solver: "nuclear margin".into(),
        residual: (&w - &v).norm(),
    })
}

/// `max_{W ⪰ 0, ‖W‖_* ≤ 1} min_n y_n⟨W, X_n⟩`.
pub fn nuclear_margin(ds: &MatrixDataset) -> Result<NuclearCertificate> {
    if ds.n_examples() == 0 {
        return Err(Error::InvalidDataset(
            "nuclear margin needs at least one example".into(),
        ));
    }
    let d = ds.dim();
    let sol = admm(ds, None)?;
    let trace = sol.w.trace();
    let w = &sol.w / trace;
    let margins = ds.margins(&w)?;
    let gamma = margins.min();
    if gamma <= 1e-9 {
        return Ok(NuclearCertificate {
            w_star: w,
            w_min_norm: DMatrix::zeros(d, d),
            gamma: gamma.min(0.0),
            support: Vec::new(),
            dual_coefficients: DVector::zeros(ds.n_examples()),
            degenerate: false,
            complementary_slackness: 0.0,
            iterations: sol.iterations,
        });
    }
    let support: Vec<usize> = (0..margins.len())
        .filter(|&n| margins[n] - gamma <= 1e-6 * gamma)
        .collect();
    let mut alpha = DVector::zeros(margins.len());
    for &n in &support {
        alpha[n] = sol.alpha[n].max(0.0);
    }
    let total = alpha.sum();
    if total > 0.0 {
        alpha /= total;
    }
    let w_min = &w / gamma;
    let slack = ds.margins(&w_min)?;
    let complementary_slackness = (0..slack.len())
        .map(|n| alpha[n] * (slack[n] - 1.0))
        .fold(0.0, f64::max);
    let degenerate = nuclear_degenerate(ds, &w)?;
    Ok(NuclearCertificate {
        w_star: w,
        w_min_norm: w_min,
        gamma,
        support,
        dual_coefficients: alpha,
        degenerate,
        complementary_slackness,
        iterations: sol.iterations,
    })
}

/// Re-solves with a small random linear tilt in both signs; distinct optima
/// mean the maximizer is not unique.
fn nuclear_degenerate(ds: &MatrixDataset, w: &DMatrix<f64>) -> Result<bool> {
    let d = ds.dim();
    let mut r = rng(0x5eed);
    let c = sym(&DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0)));
    for sign in [-1.0, 1.0] {
        let tilt = &c * (sign * DEGENERATE_PERTURBATION);
        let sol = admm(ds, Some(&tilt))?;
        let wt = &sol.w / sol.w.trace();
        if (&wt - w).amax() > DEGENERATE_TOL {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Brute force for `d = 2` over `W = [[a, b], [b, 1−a]]` with
/// `b = s·√(a(1−a))`, `a ∈ [0,1]`, `s ∈ [−1,1]`. Returns the best unit-trace
/// matrix and its margin.
pub fn nuclear_grid_2x2(ds: &MatrixDataset, resolution: f64) -> Result<(DMatrix<f64>, f64)> {
    if ds.dim() != 2 {
        return Err(Error::InvalidConfig(
            "the 2x2 brute force needs d = 2".into(),
        ));
    }
    let na = (1.0 / resolution).ceil() as usize;
    let ns = (2.0 / resolution).ceil() as usize;
    let mut best = (DMatrix::zeros(2, 2), f64::NEG_INFINITY);
    for i in 0..=na {
        let a = i as f64 / na as f64;
        let r = (a * (1.0 - a)).sqrt();
        for j in 0..=ns {
            let b = (-1.0 + 2.0 * j as f64 / ns as f64) * r;
            let w = DMatrix::from_row_slice(2, 2, &[a, b, b, 1.0 - a]);
            let g = ds.margins(&w)?.min();
            if g > best.1 {
                best = (w, g);
            }
        }
    }
    Ok(best)
}

/// `‖Ū − Z̄Ū/‖Z̄Ū‖_F‖_F` for `Ū = U/‖U‖_F` and a given symmetric direction `Z̄`.
pub fn stationarity_residual_from(u: &DMatrix<f64>, zbar: &DMatrix<f64>) -> Result<f64> {
    let nu = u.norm();
    if nu == 0.0 {
        return Err(Error::Degenerate("factor is zero".into()));
    }
    let ub = u / nu;
    let zu = zbar * &ub;
    let nzu = zu.norm();
    if nzu < 1e-12 {
        return Err(Error::Degenerate("Z̄Ū vanishes".into()));
    }
    Ok((ub - zu / nzu).norm())
}

/// Stationarity residual of the factor `U` with `Z̄` the normalized negative
/// loss gradient at `UUᵀ`.
pub fn factored_stationarity_residual(
    u: &DMatrix<f64>,
    ds: &MatrixDataset,
    loss: Loss,
) -> Result<f64> {
    let (_, g) = ds.scaled_gradient(loss, &(u * u.transpose()))?;
    let z = -sym(&g);
    let nz = z.norm();
    if nz == 0.0 || !nz.is_finite() {
        return Err(Error::Degenerate("loss gradient vanishes".into()));
    }
    stationarity_residual_from(u, &(z / nz))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: DMatrix<f64>, y: f64) -> MatrixDataset {
        MatrixDataset::new(vec![x], DVector::from_element(1, y)).unwrap()
    }

    #[test]
    fn svec_round_trip_preserves_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.0, 0.0, 1.0, -3.0]);
        assert_eq!(smat(&svec(&a), 3), a);
        assert!((svec(&a).dot(&svec(&b)) - a.dot(&b)).abs() < 1e-12);
    }

    #[test]
    fn identity_face_is_degenerate() {
        let c = nuclear_margin(&single(DMatrix::identity(2, 2), 1.0)).unwrap();
        assert!((c.gamma - 1.0).abs() < 1e-8);
        assert!(c.degenerate);
    }

    #[test]
    fn diagonal_example() {
        let ds = single(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            1.0,
        );
        let c = nuclear_margin(&ds).unwrap();
        assert!(
            (&c.w_star - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))).amax() < 1e-6
        );
        assert!((c.gamma - 1.0).abs() < 1e-8);
        assert!(!c.degenerate);
        assert!(c.complementary_slackness <= 1e-6);
        let (wg, gg) = nuclear_grid_2x2(&ds, 1e-3).unwrap();
        assert!((gg - c.gamma).abs() < 1e-3 && (wg - &c.w_star).amax() < 1e-2);
    }

    #[test]
    fn infeasible_example() {
        let c = nuclear_margin(&single(-DMatrix::identity(2, 2), 1.0)).unwrap();
        assert!(c.gamma <= 0.0 && c.support.is_empty());
    }

    #[test]
    fn eigen_factor_is_stationary() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(stationarity_residual_from(&u, &DMatrix::identity(3, 3)).unwrap() < 1e-15);
        assert!(stationarity_residual_from(&u, &DMatrix::zeros(3, 3)).is_err());
    }
}
