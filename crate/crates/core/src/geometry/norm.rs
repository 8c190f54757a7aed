use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::exponent::Exponent;
use crate::error::{Error, Result};
use crate::problems::Dataset;

/// How ℓ₁ steepest descent splits its step among tied coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    FirstIndex,
    #[default]
    Average,
}

/// Coordinates within this distance (relative to `max(1, max|g_j|)`) of the
/// largest `|g_j|` count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A symmetric positive-definite matrix with its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    pub(crate) m: DMatrix<f64>,
    pub(crate) inv: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidConfig(
                "matrix must be square and non-empty".into(),
            ));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidConfig("matrix must be symmetric".into()));
        }
        let m = (&m + m.transpose()) * 0.5;
        let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "matrix must be positive definite (smallest eigenvalue {min_eig})"
            )));
        }
        let inv = m.clone().cholesky().expect("positive definite").inverse();
        Ok(SpdMatrix { m, inv })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn swapped(&self) -> SpdMatrix {
        SpdMatrix {
            m: self.inv.clone(),
            inv: self.m.clone(),
        }
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self
            .m
            .row_iter()
            .map(|r| r.iter().cloned().collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("matrix must be square"));
        }
        SpdMatrix::new(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()))
            .map_err(serde::de::Error::custom)
    }
}

/// A norm with its dual and steepest-descent duality map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Norm {
    Lp { p: Exponent },
    Quadratic { matrix: SpdMatrix },
}

/// `(Σ|v_i|^p)^{1/p}`, scaled to avoid overflow.
pub(crate) fn lp_norm(v: &DVector<f64>, p: f64) -> f64 {
    if p.is_infinite() {
        return v.amax();
    }
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if p == 2.0 {
        return v.norm();
    }
    let m = v.amax();
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v
        .iter()
        .map(|x| (x.abs() / m).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

impl Norm {
    pub fn lp(p: Exponent) -> Norm {
        Norm::Lp { p }
    }

    pub fn l1() -> Norm {
        Norm::Lp {
            p: Exponent::new(1.0).unwrap(),
        }
    }

    pub fn l2() -> Norm {
        Norm::Lp {
            p: Exponent::new(2.0).unwrap(),
        }
    }

    pub fn linf() -> Norm {
        Norm::Lp {
            p: Exponent::Infinity,
        }
    }

    pub fn quadratic(d: DMatrix<f64>) -> Result<Norm> {
        Ok(Norm::Quadratic {
            matrix: SpdMatrix::new(d)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            Norm::Lp { p } => format!("l{p}"),
            Norm::Quadratic { .. } => "quadratic".into(),
        }
    }

    /// True for ℓ₁ and ℓ∞, whose unit balls are polytopes.
    pub fn is_polyhedral(&self) -> bool {
        matches!(self, Norm::Lp { p } if p.is_one() || p.is_infinite())
    }

    pub fn value(&self, v: &DVector<f64>) -> f64 {
        match self {
            Norm::Lp { p } => lp_norm(v, p.value()),
            Norm::Quadratic { matrix } => v.dot(&(&matrix.m * v)).max(0.0).sqrt(),
        }
    }

    pub fn dual(&self) -> Norm {
        match self {
            Norm::Lp { p } => Norm::Lp { p: p.conjugate() },
            Norm::Quadratic { matrix } => Norm::Quadratic {
                matrix: matrix.swapped(),
            },
        }
    }

    pub fn dual_value(&self, g: &DVector<f64>) -> f64 {
        match self {
            Norm::Lp { p } => lp_norm(g, p.conjugate().value()),
            Norm::Quadratic { matrix } => g.dot(&(&matrix.inv * g)).max(0.0).sqrt(),
        }
    }

    /// `B = max_n ‖x_n‖⋆`.
    pub fn feature_bound(&self, ds: &Dataset) -> f64 {
        (0..ds.n_examples())
            .map(|n| self.dual_value(&ds.feature(n)))
            .fold(0.0, f64::max)
    }

    pub fn duality_map(&self, g: &DVector<f64>) -> DVector<f64> {
        self.duality_map_with(g, TieRule::Average)
    }

    /// Steepest-descent step `Δw` with `⟨Δw, −g⟩ = ‖Δw‖² = ‖g‖⋆²`.
    pub fn duality_map_with(&self, g: &DVector<f64>, tie: TieRule) -> DVector<f64> {
        match self {
            Norm::Quadratic { matrix } => -(&matrix.inv * g),
            Norm::Lp { p } if p.is_one() => coordinate_direction(g, tie),
            Norm::Lp { p } if p.is_infinite() => {
                let l1: f64 = g.iter().map(|x| x.abs()).sum();
                g.map(|x| -l1 * sign(x))
            }
            Norm::Lp { p } => {
                let q = p.conjugate().value();
                if q == 2.0 {
                    return -g;
                }
                let nq = lp_norm(g, q);
                if nq == 0.0 {
                    return DVector::zeros(g.len());
                }
                // |g_i|^{q−1}‖g‖^{2−q} = ‖g‖ (|g_i|/‖g‖)^{q−1}
                g.map(|x| -sign(x) * nq * (x.abs() / nq).powf(q - 1.0))
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// ℓ₁ steepest-descent step: a convex combination of `−g_j e_j` over the
/// coordinates `j` maximizing `|g_j|`.
pub fn coordinate_direction(g: &DVector<f64>, tie: TieRule) -> DVector<f64> {
    let mut out = DVector::zeros(g.len());
    let m = g.amax();
    if m == 0.0 {
        return out;
    }
    let tol = TIE_TOLERANCE * m.max(1.0);
    let tied: Vec<usize> = (0..g.len()).filter(|&j| g[j].abs() >= m - tol).collect();
    match tie {
        TieRule::FirstIndex => out[tied[0]] = -g[tied[0]],
        TieRule::Average => {
            let k = tied.len() as f64;
            for &j in &tied {
                out[j] = -g[j] / k;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn norm_values() {
        assert_eq!(Norm::l2().value(&v(&[3.0, 4.0])), 5.0);
        assert_eq!(Norm::l2().dual_value(&v(&[3.0, 4.0])), 5.0);
        assert_eq!(Norm::l1().value(&v(&[3.0, -4.0])), 7.0);
        assert_eq!(Norm::l1().dual_value(&v(&[3.0, -4.0])), 4.0);
        let p43 = Norm::lp("4/3".parse().unwrap());
        assert!((p43.value(&v(&[1.0, 1.0])) - 2f64.powf(0.75)).abs() < 1e-15);
    }

    #[test]
    fn duality_map_examples() {
        assert_eq!(Norm::l2().duality_map(&v(&[4.0, 8.0])), v(&[-4.0, -8.0]));
        for p in ["4/3", "1.5", "2", "3", "1", "inf"] {
            let n = Norm::lp(p.parse().unwrap());
            assert_eq!(
                n.duality_map(&v(&[0.0, 2.5, 0.0])),
                v(&[0.0, -2.5, 0.0]),
                "p={p}"
            );
        }
        assert_eq!(Norm::l2().duality_map(&v(&[0.0, 0.0])), v(&[0.0, 0.0]));
    }

    #[test]
    fn coordinate_direction_examples() {
        let g = v(&[4.0, -8.0, 1.0]);
        for tie in [TieRule::FirstIndex, TieRule::Average] {
            assert_eq!(coordinate_direction(&g, tie), v(&[0.0, 8.0, 0.0]));
        }
        assert_eq!(
            coordinate_direction(&v(&[5.0, -5.0]), TieRule::Average),
            v(&[-2.5, 2.5])
        );
        assert_eq!(
            coordinate_direction(&v(&[5.0, -5.0]), TieRule::FirstIndex),
            v(&[-5.0, 0.0])
        );
    }

    #[test]
    fn quadratic_dual_swaps_matrices() {
        let n = Norm::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let g = v(&[1.0, -3.0]);
        assert!((n.dual().value(&g) - n.dual_value(&g)).abs() < 1e-15);
        assert!(Norm::quadratic(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(Norm::quadratic(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0])).is_err());
    }

    #[test]
    fn norm_config_parses() {
        let n: Norm = serde_json::from_str(r#"{"kind": "lp", "p": "4/3"}"#).unwrap();
        assert_eq!(n, Norm::lp(Exponent::ratio(4, 3).unwrap()));
        let n: Norm = serde_json::from_str(r#"{"kind": "lp", "p": 1.3333333333}"#).unwrap();
        assert!(matches!(
            n,
            Norm::Lp {
                p: Exponent::Real(_)
            }
        ));
        let q: Norm =
            serde_json::from_str(r#"{"kind": "quadratic", "matrix": [[2, 0], [0, 1]]}"#).unwrap();
        assert_eq!(
            serde_json::from_str::<Norm>(&serde_json::to_string(&q).unwrap()).unwrap(),
            q
        );
        assert!(serde_json::from_str::<Norm>(r#"{"kind": "lp", "p": 2, "extra": 1}"#).is_err());
    }
}
