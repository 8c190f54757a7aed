//! Maximum-margin directions under a norm, with certificates and brute-force
//! cross-checks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{half_sq_lp_hessian, Norm};
use crate::linalg::solve_spd;
use crate::oracles::lp::solve_standard_lp;
use crate::problems::{Dataset, Task};

/// Relative tolerance for support-set membership.
pub const SUPPORT_TOL: f64 = 1e-6;
const DEGENERATE_PERTURBATION: f64 = 1e-7;
const DEGENERATE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateResiduals {
    /// `‖Σ α_n y_n x_n‖⋆ − γ`, zero at an exact saddle point.
    pub duality_gap: f64,
    /// `max_n α_n (y_n⟨w*, x_n⟩ − γ)`.
    pub complementary_slackness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginCertificate {
    pub norm: Norm,
    pub gamma: f64,
    /// Unit-norm maximizer; zero when the data are not separable.
    #[serde(rename = "direction")]
    pub w_star: DVector<f64>,
    pub support: Vec<usize>,
    /// Simplex weights, zero off `support`.
    #[serde(rename = "alpha")]
    pub dual_coefficients: DVector<f64>,
    /// The maximizer is not unique; only `gamma` is meaningful.
    pub degenerate: bool,
    pub residuals: CertificateResiduals,
}

impl MarginCertificate {
    fn empty(norm: &Norm, ds: &Dataset) -> Self {
        MarginCertificate {
            norm: norm.clone(),
            gamma: 0.0,
            w_star: DVector::zeros(ds.dim()),
            support: Vec::new(),
            dual_coefficients: DVector::zeros(ds.n_examples()),
            degenerate: false,
            residuals: CertificateResiduals {
                duality_gap: 0.0,
                complementary_slackness: 0.0,
            },
        }
    }

    pub fn is_separable(&self) -> bool {
        self.gamma > 0.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Indices whose margin under `direction` is within [`SUPPORT_TOL`] (relative)
/// of the smallest margin.
pub fn support_vectors(ds: &Dataset, direction: &DVector<f64>) -> Result<Vec<usize>> {
    let m = ds.margins(direction)?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let lo = m.min();
    let tol = SUPPORT_TOL * lo.abs();
    Ok((0..m.len()).filter(|&n| m[n] - lo <= tol).collect())
}

fn min_margin(a: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    (a * w).min()
}

/// `max_{‖w‖ ≤ 1} min_n y_n ⟨w, x_n⟩` with its dual certificate.
pub fn max_margin(norm: &Norm, ds: &Dataset) -> Result<MarginCertificate> {
    if ds.task() != Task::Classification {
        return Err(Error::InvalidDataset(
            "max margin needs a classification dataset".into(),
        ));
    }
    if ds.n_examples() == 0 {
        return Err(Error::InvalidDataset(
            "max margin needs at least one example".into(),
        ));
    }
    if let Norm::Quadratic { matrix } = norm {
        if matrix.dim() != ds.dim() {
            return Err(Error::DimensionMismatch {
                expected: ds.dim(),
                found: matrix.dim(),
            });
        }
    }
    let a = ds.signed_features();
    // Separable iff the ℓ∞ margin is positive; all norms share the sign.
    let linf = polyhedral_lp(&Norm::linf(), &a, None)?;
    if linf.1 <= 1e-12 * a.amax().max(1.0) {
        return Ok(MarginCertificate::empty(norm, ds));
    }
    let (w, alpha, degenerate) = if norm.is_polyhedral() {
        let (w, _, alpha) = polyhedral_lp(norm, &a, None)?;
        let degenerate = polyhedral_degenerate(norm, &a, &w)?;
        (w, alpha, degenerate)
    } else {
        let alpha = smooth_dual(norm, &a)?;
        let w = -norm.duality_map(&a.tr_mul(&alpha));
        (w, alpha, false)
    };
    certificate(norm, ds, &a, w, alpha, degenerate)
}

fn certificate(
    norm: &Norm,
    ds: &Dataset,
    a: &DMatrix<f64>,
    w: DVector<f64>,
    alpha: DVector<f64>,
    degenerate: bool,
) -> Result<MarginCertificate> {
    let scale = norm.value(&w);
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::Degenerate(
            "max-margin solver returned a zero direction".into(),
        ));
    }
    let w = w / scale;
    let gamma = min_margin(a, &w);
    let support = support_vectors(ds, &w)?;
    let mut alpha_s = DVector::zeros(alpha.len());
    for &n in &support {
        alpha_s[n] = alpha[n].max(0.0);
    }
    let total = alpha_s.sum();
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "dual weights vanish on the support set".into(),
        ));
    }
    alpha_s /= total;
    let duality_gap = norm.dual_value(&a.tr_mul(&alpha_s)) - gamma;
    let margins = a * &w;
    let complementary_slackness = (0..margins.len())
        .map(|n| alpha_s[n] * (margins[n] - gamma))
        .fold(0.0, f64::max);
    Ok(MarginCertificate {
        norm: norm.clone(),
        gamma,
        w_star: w,
        support,
        dual_coefficients: alpha_s,
        degenerate,
        residuals: CertificateResiduals {
            duality_gap,
            complementary_slackness,
        },
    })
}

/// LP over `w = u − v`, `u, v ≥ 0`, maximizing `t` subject to
/// `t ≤ a_n·w` and the unit ball of ℓ₁ or ℓ∞. Returns `(w, t, α)`.
fn polyhedral_lp(
    norm: &Norm,
    a: &DMatrix<f64>,
    tilt: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, f64, DVector<f64>)> {
    let (n, d) = a.shape();
    let l1 = matches!(norm, Norm::Lp { p } if p.is_one());
    let ball_rows = if l1 { 1 } else { d };
    let mut m = DMatrix::zeros(n + ball_rows, 2 * d + 1);
    for i in 0..n {
        for j in 0..d {
            m[(i, j)] = -a[(i, j)];
            m[(i, d + j)] = a[(i, j)];
        }
        m[(i, 2 * d)] = 1.0;
    }
    for j in 0..d {
        let r = if l1 { n } else { n + j };
        m[(r, j)] = 1.0;
        m[(r, d + j)] = 1.0;
    }
    let mut b = DVector::zeros(n + ball_rows);
    b.rows_mut(n, ball_rows).fill(1.0);
    let mut c = DVector::zeros(2 * d + 1);
    c[2 * d] = 1.0;
    if let Some(tilt) = tilt {
        for j in 0..d {
            c[j] = tilt[j];
            c[d + j] = -tilt[j];
        }
    }
    let sol = solve_standard_lp(&m, &b, &c)?;
    let w = DVector::from_fn(d, |j, _| sol.x[j] - sol.x[d + j]);
    Ok((w, sol.x[2 * d], sol.duals.rows(0, n).into_owned()))
}

/// Re-solves with the objective tilted toward `±e_j`; a polyhedral optimum is
/// degenerate iff some tilt selects a different optimal vertex.
fn polyhedral_degenerate(norm: &Norm, a: &DMatrix<f64>, w: &DVector<f64>) -> Result<bool> {
    let d = a.ncols();
    let w = w / norm.value(w);
    for j in 0..d {
        for s in [-1.0, 1.0] {
            let mut tilt = DVector::zeros(d);
            tilt[j] = s * DEGENERATE_PERTURBATION;
            let (wt, _, _) = polyhedral_lp(norm, a, Some(&tilt))?;
            let wt = &wt / norm.value(&wt);
            if (&wt - &w).amax() > DEGENERATE_TOL {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Projected Newton on `min_{α ≥ 0} ½‖Aᵀα‖⋆² − 1ᵀα`; the primal solution of
/// `min ½‖w‖² s.t. Aw ≥ 1` is then `∇(½‖·‖⋆²)(Aᵀα)`.
fn smooth_dual(norm: &Norm, a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let objective = |alpha: &DVector<f64>| {
        let s = norm.dual_value(&a.tr_mul(alpha));
        0.5 * s * s - alpha.sum()
    };
    let gradient = |alpha: &DVector<f64>| -> DVector<f64> {
        let w = -norm.duality_map(&a.tr_mul(alpha));
        a * w - DVector::from_element(n, 1.0)
    };
    let hessian = |alpha: &DVector<f64>| -> DMatrix<f64> {
        let z = a.tr_mul(alpha);
        match norm {
            Norm::Quadratic { matrix } => matrix.inverse().clone(),
            Norm::Lp { p } => half_sq_lp_hessian(&z, p.conjugate().value()),
        }
    };
    let uniform = DVector::from_element(n, 1.0 / n as f64);
    let s = norm.dual_value(&a.tr_mul(&uniform));
    let mut alpha = uniform / (s * s);
    let mut f = objective(&alpha);
    let mut pg_norm = f64::INFINITY;
    for _ in 0..1000 {
        let g = gradient(&alpha);
        pg_norm = projected_gradient(&alpha, &g);
        if pg_norm <= 1e-13 {
            return Ok(alpha);
        }
        let eps = pg_norm.min(1e-10);
        let free: Vec<usize> = (0..n)
            .filter(|&i| !(alpha[i] <= eps && g[i] > 0.0))
            .collect();
        let h = hessian(&alpha);
        let af = DMatrix::from_fn(free.len(), a.ncols(), |r, c| a[(free[r], c)]);
        let mut hf = &af * h * af.transpose();
        let ridge = 1e-12 * (1.0 + hf.diagonal().amax());
        for i in 0..free.len() {
            hf[(i, i)] += ridge;
        }
        let gf = DVector::from_fn(free.len(), |r, _| g[free[r]]);
        let mut step = DVector::zeros(n);
        match solve_spd(&hf, &gf) {
            Ok(dir) if gf.dot(&dir) > 0.0 => {
                for (r, &i) in free.iter().enumerate() {
                    step[i] = -dir[r];
                }
            }
            _ => {
                for &i in &free {
                    step[i] = -g[i];
                }
            }
        }
        let project = |s: f64| {
            DVector::from_fn(n, |i, _| {
                if free.contains(&i) {
                    (alpha[i] + s * step[i]).max(0.0)
                } else {
                    0.0
                }
            })
        };
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let trial = project(s);
            let ft = objective(&trial);
            let decrease = g.dot(&(&trial - &alpha));
            // Near the optimum `f` stops resolving progress; accept a step
            // that shrinks the projected gradient without raising `f`.
            let flat = ft <= f + 1e-15 * f.abs()
                && projected_gradient(&trial, &gradient(&trial)) < 0.5 * pg_norm;
            if ft.is_finite() && (ft <= f + 1e-4 * decrease.min(0.0) || flat) {
                moved = trial != alpha;
                alpha = trial;
                f = ft;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if pg_norm <= 1e-9 {
        Ok(alpha)
    } else {
        Err(Error::NonConvergence {
            solver: "max-margin dual".into(),
            residual: pg_norm,
        })
    }
}

fn projected_gradient(alpha: &DVector<f64>, g: &DVector<f64>) -> f64 {
    (0..alpha.len())
        .map(|i| {
            if alpha[i] > 0.0 {
                g[i].abs()
            } else {
                (-g[i]).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Hard-margin SVM `min ‖w‖₂ s.t. y_n⟨w,x_n⟩ ≥ 1`, solved by enumerating
/// candidate support sets of size at most `d`. Returns the unit direction and
/// margin, or `None` when no candidate is feasible.
pub fn hard_svm_enumeration(ds: &Dataset) -> Result<Option<(DVector<f64>, f64)>> {
    let a = ds.signed_features();
    let (n, d) = a.shape();
    let mut best: Option<DVector<f64>> = None;
    let mut subset = Vec::new();
    enumerate(n, d.min(n), 0, &mut subset, &mut |s| {
        let rows = DMatrix::from_fn(s.len(), d, |r, c| a[(s[r], c)]);
        let gram = &rows * rows.transpose();
        let Some(inv) = gram.clone().try_inverse() else {
            return;
        };
        if (&gram * &inv - DMatrix::identity(s.len(), s.len())).amax() > 1e-9 {
            return;
        }
        let alpha = inv * DVector::from_element(s.len(), 1.0);
        if alpha.iter().any(|&x| x < -1e-12) {
            return;
        }
        let w = rows.tr_mul(&alpha);
        if min_margin(&a, &w) < 1.0 - 1e-9 {
            return;
        }
        if best.as_ref().is_none_or(|b| w.norm() < b.norm()) {
            best = Some(w);
        }
    });
    Ok(best.map(|w| {
        let u = &w / w.norm();
        let g = min_margin(&a, &u);
        (u, g)
    }))
}

fn enumerate(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if !cur.is_empty() {
        f(cur);
    }
    if cur.len() == k {
        return;
    }
    for i in start..n {
        cur.push(i);
        enumerate(n, k, i + 1, cur, f);
        cur.pop();
    }
}

/// Dense search over the unit sphere of `norm` (angular spacing `resolution`),
/// a local patch polish, then exhaustive enumeration of active sets. Only for
/// `d ≤ 3`. Every candidate is scored as its true normalized margin, so the
/// result never overstates γ.
pub fn grid_margin(norm: &Norm, ds: &Dataset, resolution: f64) -> Result<(DVector<f64>, f64)> {
    let d = ds.dim();
    if d == 0 || d > 3 {
        return Err(Error::InvalidConfig(format!(
            "grid search supports 1 ≤ d ≤ 3, got {d}"
        )));
    }
    if !(resolution > 0.0) {
        return Err(Error::InvalidConfig(
            "grid resolution must be positive".into(),
        ));
    }
    let a = ds.signed_features();
    let score = |u: &DVector<f64>| {
        let s = norm.value(u);
        if s > 0.0 {
            min_margin(&a, &(u / s))
        } else {
            f64::NEG_INFINITY
        }
    };
    let point = |k: usize, m: usize| -> DVector<f64> {
        match d {
            1 => DVector::from_element(1, if k == 0 { 1.0 } else { -1.0 }),
            2 => {
                let t = std::f64::consts::TAU * k as f64 / m as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            }
            _ => {
                // Fibonacci lattice: near-uniform with spacing ≈ √(4π/m).
                let z = 1.0 - (2.0 * k as f64 + 1.0) / m as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = k as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
                DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
            }
        }
    };
    let m = match d {
        1 => 2,
        2 => (std::f64::consts::TAU / resolution).ceil() as usize,
        _ => (4.0 * std::f64::consts::PI / (resolution * resolution)).ceil() as usize,
    };
    let (k, _) = (0..m)
        .into_par_iter()
        .map(|k| (k, score(&point(k, m))))
        .reduce(
            || (0, f64::NEG_INFINITY),
            |x, y| {
                if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) {
                    y
                } else {
                    x
                }
            },
        );
    let mut x = point(k, m);
    x /= norm.value(&x);
    let mut fx = score(&x);
    // Superlevel sets {u : aₙ·u ≥ γ‖u‖ ∀n} are convex cones, so the score is
    // unimodal on the sphere; the patch refines smooth optima and the
    // active-set pass below handles sharp ridges where margins tie.
    const K: i64 = 8;
    let mut h = 2.0 * resolution;
    while h > 1e-13 {
        let e = x.normalize();
        let basis: Vec<DVector<f64>> = (0..d)
            .map(|i| {
                let mut b = DVector::zeros(d);
                b[i] = 1.0;
                b
            })
            .map(|b| &b - &e * e.dot(&b))
            .collect();
        let mut tangent: Vec<DVector<f64>> = Vec::new();
        for b in basis {
            let r = tangent.iter().fold(b, |r, t| &r - t * t.dot(&r));
            if r.norm() > 1e-6 && tangent.len() + 1 < d {
                tangent.push(r.normalize());
            }
        }
        let scale = x.norm();
        let offsets: Vec<Vec<i64>> = match tangent.len() {
            0 => vec![],
            1 => (-K..=K).map(|i| vec![i]).collect(),
            _ => (-K..=K)
                .flat_map(|i| (-K..=K).map(move |j| vec![i, j]))
                .collect(),
        };
        for off in &offsets {
            let mut y = x.clone();
            for (c, t) in off.iter().zip(&tangent) {
                y += t * (scale * h * *c as f64 / K as f64);
            }
            let s = norm.value(&y);
            if s <= 0.0 {
                continue;
            }
            y /= s;
            let fy = score(&y);
            if fy > fx {
                x = y;
                fx = fy;
            }
        }
        h *= 0.25;
    }
    let mut subsets = Vec::new();
    enumerate(a.nrows(), d, 0, &mut Vec::new(), &mut |s| {
        subsets.push(s.to_vec())
    });
    for s in subsets {
        if let Some(y) = min_norm_on_active_set(norm, &a, &s) {
            let fy = score(&y);
            if fy > fx {
                x = &y / norm.value(&y);
                fx = fy;
            }
        }
    }
    Ok((x, fx))
}

/// `argmin ‖w‖` over `{w : aₙ·w = 1, n ∈ active}` by nested golden-section
/// search on the affine parametrization; `None` if the rows are dependent.
fn min_norm_on_active_set(norm: &Norm, a: &DMatrix<f64>, active: &[usize]) -> Option<DVector<f64>> {
    let d = a.ncols();
    let rows = DMatrix::from_fn(active.len(), d, |i, j| a[(active[i], j)]);
    let svd = rows.clone().svd(true, true);
    if svd.singular_values.min() < 1e-10 * svd.singular_values.max() {
        return None;
    }
    let w_p = svd
        .solve(&DVector::from_element(active.len(), 1.0), 0.0)
        .ok()?;
    let full = rows.transpose().svd(true, false);
    // Null space of the active rows: complete the row space to a basis of ℝᵈ.
    let mut null: Vec<DVector<f64>> = Vec::new();
    let range: Vec<DVector<f64>> = full.u?.column_iter().map(|c| c.into_owned()).collect();
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        let r = range.iter().chain(&null).fold(e, |r, b| &r - b * b.dot(&r));
        if r.norm() > 1e-6 && null.len() + active.len() < d {
            null.push(r.normalize());
        }
    }
    // ‖·‖₂ and any ℓp norm differ by at most √d, so the minimizer lies within this radius.
    let radius = (d as f64 + 1.0) * w_p.norm() + 1.0;
    let point = |c: &[f64]| null.iter().zip(c).fold(w_p.clone(), |w, (v, t)| w + v * *t);
    Some(match null.len() {
        0 => w_p.clone(),
        1 => point(&[golden_min(radius, |t| norm.value(&point(&[t])))]),
        _ => {
            let inner = |t: f64| golden_min(radius, |s| norm.value(&point(&[t, s])));
            let t = golden_min(radius, |t| norm.value(&point(&[t, inner(t)])));
            point(&[t, inner(t)])
        }
    })
}

/// Minimizer of a convex `f` on `[-radius, radius]`.
fn golden_min(radius: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-radius, radius);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-12 * radius {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Exponent;

    fn two_points() -> Dataset {
        Dataset::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[1.0, 1.0],
            Task::Classification,
        )
        .unwrap()
    }

    #[test]
    fn two_point_examples() {
        let ds = two_points();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = max_margin(&Norm::l2(), &ds).unwrap();
        assert!((c.gamma - h).abs() < 1e-12);
        assert!((&c.w_star - DVector::from_vec(vec![h, h])).amax() < 1e-10);
        assert_eq!(c.support, vec![0, 1]);
        assert!((c.dual_coefficients[0] - 0.5).abs() < 1e-9);
        assert!(c.residuals.duality_gap.abs() < 1e-10);
        let c = max_margin(&Norm::l1(), &ds).unwrap();
        assert!((c.gamma - 0.5).abs() < 1e-12);
        assert!((&c.w_star - DVector::from_vec(vec![0.5, 0.5])).amax() < 1e-12);
        assert!(!c.degenerate);
        let c = max_margin(&Norm::linf(), &ds).unwrap();
        assert!((c.gamma - 1.0).abs() < 1e-12);
        assert!((&c.w_star - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-12);
        for norm in [Norm::l2(), Norm::l1(), Norm::linf()] {
            let (_, g) = grid_margin(&norm, &ds, 1e-3).unwrap();
            let c = max_margin(&norm, &ds).unwrap();
            assert!((g - c.gamma).abs() < 1e-6, "{}", norm.label());
        }
    }

    #[test]
    fn linf_face_is_degenerate() {
        // Only x₁ constrains the margin; w₂ ∈ [−1, 1] is free under ℓ∞.
        let ds = Dataset::from_rows(&[vec![1.0, 0.0]], &[1.0], Task::Classification).unwrap();
        let c = max_margin(&Norm::linf(), &ds).unwrap();
        assert!((c.gamma - 1.0).abs() < 1e-12);
        assert!(c.degenerate);
    }

    #[test]
    fn non_separable_gives_empty_certificate() {
        let ds = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![1.0, 0.0]],
            &[1.0, -1.0],
            Task::Classification,
        )
        .unwrap();
        for norm in [Norm::l2(), Norm::l1(), Norm::linf()] {
            let c = max_margin(&norm, &ds).unwrap();
            assert!(c.gamma <= 0.0 && c.support.is_empty() && !c.is_separable());
        }
    }

    #[test]
    fn support_vector_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let dir = DVector::from_vec(vec![h, h]);
        assert_eq!(support_vectors(&two_points(), &dir).unwrap(), vec![0, 1]);
        let ds = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]],
            &[1.0, 1.0, 1.0],
            Task::Classification,
        )
        .unwrap();
        assert_eq!(support_vectors(&ds, &dir).unwrap(), vec![0, 1]);
        let one = Dataset::from_rows(&[vec![3.0, 1.0]], &[-1.0], Task::Classification).unwrap();
        assert_eq!(support_vectors(&one, &dir).unwrap(), vec![0]);
    }

    #[test]
    fn svm_enumeration_agrees() {
        let ds = Dataset::from_rows(
            &[
                vec![1.0, 0.2, 0.0],
                vec![0.3, 1.0, -0.5],
                vec![-1.0, -0.5, -0.2],
                vec![0.5, 0.5, 1.0],
            ],
            &[1.0, 1.0, -1.0, 1.0],
            Task::Classification,
        )
        .unwrap();
        let (u, g) = hard_svm_enumeration(&ds).unwrap().unwrap();
        let c = max_margin(&Norm::l2(), &ds).unwrap();
        assert!((g - c.gamma).abs() < 1e-10);
        assert!((u - &c.w_star).amax() < 1e-8);
    }

    #[test]
    fn lp_norm_matches_grid() {
        let ds = Dataset::from_rows(
            &[vec![1.0, 0.3], vec![0.2, 1.0], vec![0.8, 0.9]],
            &[1.0, 1.0, 1.0],
            Task::Classification,
        )
        .unwrap();
        for norm in [
            Norm::lp(Exponent::ratio(4, 3).unwrap()),
            Norm::lp(Exponent::ratio(3, 1).unwrap()),
        ] {
            let c = max_margin(&norm, &ds).unwrap();
            let (w, g) = grid_margin(&norm, &ds, 1e-3).unwrap();
            assert!(
                (g - c.gamma).abs() < 1e-8,
                "{} {} {}",
                norm.label(),
                g,
                c.gamma
            );
            assert!((w - &c.w_star).amax() < 1e-5);
            assert!(c.residuals.duality_gap.abs() < 1e-8);
        }
    }

    #[test]
    fn certificate_round_trips() {
        let c = max_margin(&Norm::l2(), &two_points()).unwrap();
        let json = c.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in [
            "gamma",
            "direction",
            "support",
            "alpha",
            "degenerate",
            "residuals",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: MarginCertificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
