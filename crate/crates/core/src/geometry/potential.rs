use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::exponent::Exponent;
use super::norm::{lp_norm, SpdMatrix};
use crate::error::{Error, Result};

/// A strongly convex mirror map `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    /// `½‖w‖₂²`.
    SquaredEuclidean,
    /// `Σ w_i log w_i − w_i` on the open positive orthant.
    Entropy,
    /// `½ wᵀDw`.
    Quadratic { matrix: SpdMatrix },
    /// `½‖w‖_p²` with `p ∈ (1, 2]`.
    #[serde(rename = "squared-lp")]
    SquaredLp {
        #[serde(deserialize_with = "de_squared_lp_exponent")]
        p: Exponent,
    },
}

fn de_squared_lp_exponent<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Exponent, D::Error> {
    let p = Exponent::deserialize(d)?;
    check_squared_lp(p).map_err(serde::de::Error::custom)?;
    Ok(p)
}

fn check_squared_lp(p: Exponent) -> Result<()> {
    let v = p.value();
    if !(v > 1.0 && v <= 2.0) {
        return Err(Error::InvalidConfig(format!(
            "squared-lp potential needs p in (1, 2], got {v}"
        )));
    }
    Ok(())
}

/// `(sign(z_i)|z_i|^{r−1}‖z‖_r^{2−r})_i`, the gradient of `½‖z‖_r²`.
pub(crate) fn half_sq_lp_grad(z: &DVector<f64>, r: f64) -> DVector<f64> {
    if r == 2.0 {
        return z.clone();
    }
    let n = lp_norm(z, r);
    if n == 0.0 {
        return DVector::zeros(z.len());
    }
    z.map(|x| x.signum() * n * (x.abs() / n).powf(r - 1.0))
}

/// Hessian of `½‖z‖_r²`. For `r < 2` the diagonal is singular at zero
/// coordinates; `|z_i|/‖z‖` is floored at `1e−8` there.
pub(crate) fn half_sq_lp_hessian(z: &DVector<f64>, r: f64) -> DMatrix<f64> {
    let d = z.len();
    if r == 2.0 {
        return DMatrix::identity(d, d);
    }
    let n = lp_norm(z, r);
    if n == 0.0 {
        return DMatrix::zeros(d, d);
    }
    // In units of n: (r−1) diag(|z/n|^{r−2}) + (2−r) s sᵀ, s_i = sign(z_i)|z_i/n|^{r−1}.
    let s = z.map(|x| x.signum() * (x.abs() / n).powf(r - 1.0));
    let mut h = &s * s.transpose() * (2.0 - r);
    for i in 0..d {
        h[(i, i)] += (r - 1.0)
            * (z[i].abs() / n)
                .max(if r < 2.0 { 1e-8 } else { 0.0 })
                .powf(r - 2.0);
    }
    h
}

impl Potential {
    pub fn quadratic(d: DMatrix<f64>) -> Result<Self> {
        Ok(Potential::Quadratic {
            matrix: SpdMatrix::new(d)?,
        })
    }

    pub fn squared_lp(p: Exponent) -> Result<Self> {
        check_squared_lp(p)?;
        Ok(Potential::SquaredLp { p })
    }

    pub fn label(&self) -> String {
        match self {
            Potential::SquaredEuclidean => "squared-euclidean".into(),
            Potential::Entropy => "entropy".into(),
            Potential::Quadratic { .. } => "quadratic".into(),
            Potential::SquaredLp { p } => format!("squared-l{p}"),
        }
    }

    fn check_dim(&self, w: &DVector<f64>) -> Result<()> {
        if let Potential::Quadratic { matrix } = self {
            if matrix.dim() != w.len() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.dim(),
                    found: w.len(),
                });
            }
        }
        Ok(())
    }

    /// Rejects points outside the domain (non-positive entropy coordinates).
    pub fn check_domain(&self, w: &DVector<f64>) -> Result<()> {
        self.check_dim(w)?;
        if let Some(i) = w.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain {
                index: i,
                value: w[i],
            });
        }
        if matches!(self, Potential::Entropy) {
            if let Some(i) = w.iter().position(|&x| x <= 0.0) {
                return Err(Error::Domain {
                    index: i,
                    value: w[i],
                });
            }
        }
        Ok(())
    }

    /// `argmin ψ` in dimension `d`.
    pub fn minimizer(&self, d: usize) -> DVector<f64> {
        match self {
            Potential::Entropy => DVector::from_element(d, 1.0),
            _ => DVector::zeros(d),
        }
    }

    pub fn value(&self, w: &DVector<f64>) -> Result<f64> {
        self.check_domain(w)?;
        Ok(match self {
            Potential::SquaredEuclidean => 0.5 * w.norm_squared(),
            Potential::Entropy => w.iter().map(|&x| x * x.ln() - x).sum(),
            Potential::Quadratic { matrix } => 0.5 * w.dot(&(&matrix.m * w)),
            Potential::SquaredLp { p } => 0.5 * lp_norm(w, p.value()).powi(2),
        })
    }

    /// Link map `∇ψ(w)`.
    pub fn grad(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(w)?;
        Ok(match self {
            Potential::SquaredEuclidean => w.clone(),
            Potential::Entropy => w.map(f64::ln),
            Potential::Quadratic { matrix } => &matrix.m * w,
            Potential::SquaredLp { p } => half_sq_lp_grad(w, p.value()),
        })
    }

    /// Inverse link `∇ψ*(z)`.
    pub fn grad_inverse(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        if let Some(i) = z.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain {
                index: i,
                value: z[i],
            });
        }
        Ok(match self {
            Potential::SquaredEuclidean => z.clone(),
            Potential::Entropy => z.map(f64::exp),
            Potential::Quadratic { matrix } => &matrix.inv * z,
            Potential::SquaredLp { p } => half_sq_lp_grad(z, p.conjugate().value()),
        })
    }

    /// Convex conjugate `ψ*(z)`.
    pub fn conjugate_value(&self, z: &DVector<f64>) -> Result<f64> {
        self.check_dim(z)?;
        Ok(match self {
            Potential::SquaredEuclidean => 0.5 * z.norm_squared(),
            Potential::Entropy => z.iter().map(|x| x.exp()).sum(),
            Potential::Quadratic { matrix } => 0.5 * z.dot(&(&matrix.inv * z)),
            Potential::SquaredLp { p } => 0.5 * lp_norm(z, p.conjugate().value()).powi(2),
        })
    }

    /// `∇²ψ*(z)`, which equals `(∇²ψ(w))⁻¹` at `z = ∇ψ(w)`.
    pub fn conjugate_hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(z)?;
        let d = z.len();
        Ok(match self {
            Potential::SquaredEuclidean => DMatrix::identity(d, d),
            Potential::Entropy => DMatrix::from_diagonal(&z.map(f64::exp)),
            Potential::Quadratic { matrix } => matrix.inv.clone(),
            Potential::SquaredLp { p } => half_sq_lp_hessian(z, p.conjugate().value()),
        })
    }

    /// Solves `∇²ψ(w) v = g`.
    pub fn hessian_inverse_apply(
        &self,
        w: &DVector<f64>,
        g: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_domain(w)?;
        if g.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                found: g.len(),
            });
        }
        Ok(match self {
            Potential::SquaredEuclidean => g.clone(),
            Potential::Entropy => w.component_mul(g),
            Potential::Quadratic { matrix } => &matrix.inv * g,
            Potential::SquaredLp { .. } => self.conjugate_hessian(&self.grad(w)?)? * g,
        })
    }

    /// `D_ψ(w, w_ref) = ψ(w) − ψ(w_ref) − ⟨∇ψ(w_ref), w − w_ref⟩`.
    pub fn bregman_divergence(&self, w: &DVector<f64>, w_ref: &DVector<f64>) -> Result<f64> {
        self.check_domain(w)?;
        self.check_domain(w_ref)?;
        if w.len() != w_ref.len() {
            return Err(Error::DimensionMismatch {
                expected: w_ref.len(),
                found: w.len(),
            });
        }
        let d = match self {
            Potential::SquaredEuclidean => 0.5 * (w - w_ref).norm_squared(),
            Potential::Entropy => w
                .iter()
                .zip(w_ref.iter())
                .map(|(&a, &b)| a * (a / b).ln() - a + b)
                .sum(),
            Potential::Quadratic { matrix } => {
                let e = w - w_ref;
                0.5 * e.dot(&(&matrix.m * &e))
            }
            Potential::SquaredLp { .. } => {
                self.value(w)? - self.value(w_ref)? - self.grad(w_ref)?.dot(&(w - w_ref))
            }
        };
        Ok(d.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn entropy_link_and_inverse() {
        let e = Potential::Entropy;
        assert_eq!(e.grad(&v(&[1.0, 1.0])).unwrap(), v(&[0.0, 0.0]));
        let w = e.grad_inverse(&v(&[-0.4, -0.8])).unwrap();
        assert!((w[0] - (-0.4f64).exp()).abs() < 1e-15 && (w[1] - (-0.8f64).exp()).abs() < 1e-15);
        assert!(matches!(
            e.grad(&v(&[1.0, 0.0])),
            Err(Error::Domain { index: 1, .. })
        ));
        assert!(e.grad(&v(&[-1.0, 1.0])).is_err());
    }

    #[test]
    fn bregman_examples() {
        let e = Potential::Entropy;
        let d = e
            .bregman_divergence(&v(&[0.5, 0.25]), &v(&[1.0, 1.0]))
            .unwrap();
        let expected = 0.5 * 0.5f64.ln() + 0.25 * 0.25f64.ln() - 0.75 + 2.0;
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 0.5569).abs() < 1e-4);
        let se = Potential::SquaredEuclidean;
        assert_eq!(
            se.bregman_divergence(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]))
                .unwrap(),
            0.5
        );
        assert_eq!(
            e.bregman_divergence(&v(&[0.3, 2.0]), &v(&[0.3, 2.0]))
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn hessian_inverse_examples() {
        let e = Potential::Entropy;
        assert_eq!(
            e.hessian_inverse_apply(&v(&[1.0, 1.0]), &v(&[4.0, 8.0]))
                .unwrap(),
            v(&[4.0, 8.0])
        );
        assert_eq!(
            e.hessian_inverse_apply(&v(&[2.0, 1.0]), &v(&[1.0, 1.0]))
                .unwrap(),
            v(&[2.0, 1.0])
        );
        let q = Potential::quadratic(DMatrix::identity(2, 2) * 2.0).unwrap();
        assert!(
            (q.hessian_inverse_apply(&v(&[0.0, 0.0]), &v(&[3.0, -1.0]))
                .unwrap()
                - v(&[1.5, -0.5]))
            .amax()
                < 1e-15
        );
        assert_eq!(
            Potential::quadratic(DMatrix::identity(2, 2))
                .unwrap()
                .grad(&v(&[2.0, 3.0]))
                .unwrap(),
            v(&[2.0, 3.0])
        );
    }

    #[test]
    fn squared_lp_range_is_enforced() {
        assert!(Potential::squared_lp(Exponent::new(3.0).unwrap()).is_err());
        assert!(Potential::squared_lp(Exponent::new(1.0).unwrap()).is_err());
        assert!(Potential::squared_lp(Exponent::ratio(4, 3).unwrap()).is_ok());
        assert!(serde_json::from_str::<Potential>(r#"{"kind": "squared-lp", "p": 3}"#).is_err());
        let p: Potential = serde_json::from_str(r#"{"kind": "squared-lp", "p": "4/3"}"#).unwrap();
        assert_eq!(
            p,
            Potential::squared_lp(Exponent::ratio(4, 3).unwrap()).unwrap()
        );
        let e: Potential = serde_json::from_str(r#"{"kind": "entropy"}"#).unwrap();
        assert_eq!(e, Potential::Entropy);
    }

    #[test]
    fn squared_lp_hessian_matches_finite_differences() {
        let pot = Potential::squared_lp(Exponent::ratio(4, 3).unwrap()).unwrap();
        let z = v(&[0.7, -1.3, 0.4]);
        let h = pot.conjugate_hessian(&z).unwrap();
        let eps = 1e-6;
        for j in 0..3 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += eps;
            zm[j] -= eps;
            let col =
                (pot.grad_inverse(&zp).unwrap() - pot.grad_inverse(&zm).unwrap()) / (2.0 * eps);
            for i in 0..3 {
                assert!((col[i] - h[(i, j)]).abs() < 1e-7, "({i},{j})");
            }
        }
    }
}
