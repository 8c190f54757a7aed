use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::loss::Loss;
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, SpanProjector};

/// Objective values above this are reported as saturated.
pub const OBJECTIVE_CAP: f64 = 1e300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// An objective value together with its saturation flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub saturated: bool,
}

/// A gradient stored as `exp(log_scale) · direction`.
///
/// For strict-monotone losses `log_scale = log Σ|ℓ′_n|`, so `direction` stays
/// representable long after the raw gradient underflows. For the squared loss
/// `log_scale = 0` and `direction` is the raw gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledGradient {
    pub log_scale: f64,
    pub direction: DVector<f64>,
}

impl ScaledGradient {
    pub fn to_raw(&self) -> DVector<f64> {
        &self.direction * self.log_scale.exp()
    }
}

/// Labeled feature vectors, stored row-wise (`N × d`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    task: Task,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>, task: Task) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        if task == Task::Classification && labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidDataset(
                "classification labels must be ±1".into(),
            ));
        }
        Ok(Dataset {
            features,
            labels,
            task,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[f64], task: Task) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        let features = DMatrix::from_row_slice(rows.len(), d, &flat);
        Dataset::new(features, DVector::from_column_slice(labels), task)
    }

    pub fn n_examples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn feature(&self, n: usize) -> DVector<f64> {
        self.features.row(n).transpose()
    }

    /// Rows `y_n x_n`.
    pub fn signed_features(&self) -> DMatrix<f64> {
        let mut a = self.features.clone();
        for (n, mut row) in a.row_iter_mut().enumerate() {
            row *= self.labels[n];
        }
        a
    }

    /// Keeps only the listed examples.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        self.check_subset(idx)?;
        let features = self.features.select_rows(idx);
        let labels = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.labels[i]));
        Ok(Dataset {
            features,
            labels,
            task: self.task,
        })
    }

    /// Projector onto `span{x_n}`.
    pub fn span(&self) -> SpanProjector {
        SpanProjector::from_rows(&self.features)
    }

    pub fn check_dim(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: w.len(),
            });
        }
        Ok(())
    }

    fn check_subset(&self, idx: &[usize]) -> Result<()> {
        match idx.iter().find(|&&i| i >= self.n_examples()) {
            Some(&i) => Err(Error::InvalidDataset(format!(
                "subset index {i} out of range for {} examples",
                self.n_examples()
            ))),
            None => Ok(()),
        }
    }

    /// Predictions `⟨w, x_n⟩`.
    pub fn predictions(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(w)?;
        Ok(&self.features * w)
    }

    /// Signed margins `y_n⟨w, x_n⟩`.
    pub fn margins(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.predictions(w)?.component_mul(&self.labels))
    }

    /// Largest constraint violation `max_n |⟨w,x_n⟩ − y_n|`.
    pub fn max_violation(&self, w: &DVector<f64>) -> Result<f64> {
        Ok((self.predictions(w)? - &self.labels).amax())
    }

    pub fn objective(&self, loss: Loss, w: &DVector<f64>) -> Result<f64> {
        Ok(self.evaluate(loss, w)?.value)
    }

    /// Objective with saturation at [`OBJECTIVE_CAP`].
    pub fn evaluate(&self, loss: Loss, w: &DVector<f64>) -> Result<Evaluation> {
        let u = self.predictions(w)?;
        let value: f64 = match loss {
            Loss::Squared => u
                .iter()
                .zip(self.labels.iter())
                .map(|(&u, &y)| loss.value(u, y))
                .sum(),
            _ => self.log_objective_from(loss, &u).exp(),
        };
        if value.is_nan() {
            return Err(Error::NonFinite {
                iteration: 0,
                what: "objective".into(),
            });
        }
        Ok(if value > OBJECTIVE_CAP {
            Evaluation {
                value: OBJECTIVE_CAP,
                saturated: true,
            }
        } else {
            Evaluation {
                value,
                saturated: false,
            }
        })
    }

    /// `log L(w)`, computed without forming `L(w)`.
    pub fn log_objective(&self, loss: Loss, w: &DVector<f64>) -> Result<f64> {
        let u = self.predictions(w)?;
        Ok(self.log_objective_from(loss, &u))
    }

    fn log_objective_from(&self, loss: Loss, u: &DVector<f64>) -> f64 {
        match loss {
            Loss::Squared => u
                .iter()
                .zip(self.labels.iter())
                .map(|(&u, &y)| loss.value(u, y))
                .sum::<f64>()
                .ln(),
            _ => log_sum_exp(
                u.iter()
                    .zip(self.labels.iter())
                    .map(|(&u, &y)| loss.log_value(u, y)),
            ),
        }
    }

    /// `Σ_{n∈subset} ℓ′(⟨w,x_n⟩, y_n) x_n`; the full sum when `subset` is `None`.
    pub fn gradient(
        &self,
        loss: Loss,
        w: &DVector<f64>,
        subset: Option<&[usize]>,
    ) -> Result<DVector<f64>> {
        let u = self.predictions(w)?;
        let mut coeff = DVector::zeros(self.n_examples());
        match subset {
            Some(idx) => {
                self.check_subset(idx)?;
                for &n in idx {
                    coeff[n] += loss.derivative(u[n], self.labels[n]);
                }
            }
            None => {
                for n in 0..self.n_examples() {
                    coeff[n] = loss.derivative(u[n], self.labels[n]);
                }
            }
        }
        Ok(self.features.tr_mul(&coeff))
    }

    /// Gradient in the scaled representation of [`ScaledGradient`].
    pub fn scaled_gradient(
        &self,
        loss: Loss,
        w: &DVector<f64>,
        subset: Option<&[usize]>,
    ) -> Result<ScaledGradient> {
        if loss == Loss::Squared {
            return Ok(ScaledGradient {
                log_scale: 0.0,
                direction: self.gradient(loss, w, subset)?,
            });
        }
        let u = self.predictions(w)?;
        let idx: Vec<usize> = match subset {
            Some(idx) => {
                self.check_subset(idx)?;
                idx.to_vec()
            }
            None => (0..self.n_examples()).collect(),
        };
        let terms: Vec<(usize, f64, f64)> = idx
            .iter()
            .map(|&n| {
                let (la, s) = loss.log_abs_derivative(u[n], self.labels[n]);
                (n, la, s)
            })
            .collect();
        let log_scale = log_sum_exp(terms.iter().map(|t| t.1));
        let mut coeff = DVector::zeros(self.n_examples());
        if log_scale.is_finite() {
            for &(n, la, s) in &terms {
                coeff[n] += s * (la - log_scale).exp();
            }
        }
        Ok(ScaledGradient {
            log_scale,
            direction: self.features.tr_mul(&coeff),
        })
    }
}

/// Labeled square matrices for the factorized setting.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixDataset {
    features: Vec<DMatrix<f64>>,
    labels: DVector<f64>,
}

impl MatrixDataset {
    pub fn new(features: Vec<DMatrix<f64>>, labels: DVector<f64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature matrices but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = features.first().map_or(0, |x| x.nrows());
        for x in &features {
            if x.nrows() != d || x.ncols() != d {
                return Err(Error::InvalidDataset(format!(
                    "feature of shape {}x{} where {d}x{d} expected",
                    x.nrows(),
                    x.ncols()
                )));
            }
        }
        if features
            .iter()
            .flat_map(|x| x.iter())
            .chain(labels.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(MatrixDataset { features, labels })
    }

    pub fn n_examples(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |x| x.nrows())
    }

    pub fn features(&self) -> &[DMatrix<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    fn check_shape(&self, w: &DMatrix<f64>) -> Result<()> {
        let d = self.dim();
        if w.nrows() != d || w.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: w.nrows().max(w.ncols()),
            });
        }
        Ok(())
    }

    /// Frobenius predictions `⟨W, X_n⟩`.
    pub fn predictions(&self, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_shape(w)?;
        Ok(DVector::from_iterator(
            self.n_examples(),
            self.features.iter().map(|x| x.dot(w)),
        ))
    }

    pub fn margins(&self, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.predictions(w)?.component_mul(&self.labels))
    }

    pub fn objective(&self, loss: Loss, w: &DMatrix<f64>) -> Result<f64> {
        let u = self.predictions(w)?;
        let value: f64 = match loss {
            Loss::Squared => u
                .iter()
                .zip(self.labels.iter())
                .map(|(&u, &y)| loss.value(u, y))
                .sum(),
            _ => log_sum_exp(
                u.iter()
                    .zip(self.labels.iter())
                    .map(|(&u, &y)| loss.log_value(u, y)),
            )
            .exp(),
        };
        Ok(value.min(OBJECTIVE_CAP))
    }

    pub fn log_objective(&self, loss: Loss, w: &DMatrix<f64>) -> Result<f64> {
        let u = self.predictions(w)?;
        Ok(log_sum_exp(
            u.iter()
                .zip(self.labels.iter())
                .map(|(&u, &y)| loss.log_value(u, y)),
        ))
    }

    pub fn gradient(&self, loss: Loss, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let u = self.predictions(w)?;
        let d = self.dim();
        let mut g = DMatrix::zeros(d, d);
        for (n, x) in self.features.iter().enumerate() {
            g += x * loss.derivative(u[n], self.labels[n]);
        }
        Ok(g)
    }

    /// Gradient as `(log_scale, direction)` with `∇L = exp(log_scale)·direction`.
    pub fn scaled_gradient(&self, loss: Loss, w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        if loss == Loss::Squared {
            return Ok((0.0, self.gradient(loss, w)?));
        }
        let u = self.predictions(w)?;
        let terms: Vec<(f64, f64)> = (0..self.n_examples())
            .map(|n| loss.log_abs_derivative(u[n], self.labels[n]))
            .collect();
        let log_scale = log_sum_exp(terms.iter().map(|t| t.0));
        let d = self.dim();
        let mut g = DMatrix::zeros(d, d);
        for (x, &(la, s)) in self.features.iter().zip(&terms) {
            g += x * (s * (la - log_scale).exp());
        }
        Ok((log_scale, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> Dataset {
        Dataset::from_rows(&[vec![1.0, 2.0]], &[1.0], Task::Regression).unwrap()
    }

    #[test]
    fn example1_objective_and_gradient() {
        let ds = example1();
        let w = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(ds.objective(Loss::Squared, &w).unwrap(), 4.0);
        assert_eq!(
            ds.gradient(Loss::Squared, &w, None).unwrap(),
            DVector::from_vec(vec![4.0, 8.0])
        );
    }

    #[test]
    fn exponential_objective_at_origin_counts_examples() {
        let ds = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            &[1.0, -1.0, 1.0],
            Task::Classification,
        )
        .unwrap();
        let w = DVector::zeros(2);
        assert!((ds.objective(Loss::Exponential, &w).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn errors_on_bad_shapes() {
        let ds = example1();
        assert!(matches!(
            ds.objective(Loss::Squared, &DVector::zeros(3)),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
        assert!(ds
            .gradient(Loss::Squared, &DVector::zeros(2), Some(&[1]))
            .is_err());
        assert!(Dataset::from_rows(&[vec![1.0]], &[0.5], Task::Classification).is_err());
    }

    #[test]
    fn empty_subset_gives_zero_gradient() {
        let ds = example1();
        let g = ds
            .gradient(Loss::Squared, &DVector::from_vec(vec![1.0, 1.0]), Some(&[]))
            .unwrap();
        assert_eq!(g, DVector::zeros(2));
    }

    #[test]
    fn saturation_is_flagged() {
        let ds = Dataset::from_rows(&[vec![1.0]], &[1.0], Task::Classification).unwrap();
        let e = ds
            .evaluate(Loss::Exponential, &DVector::from_vec(vec![-1000.0]))
            .unwrap();
        assert!(e.saturated);
        assert_eq!(e.value, OBJECTIVE_CAP);
        assert!(
            (ds.log_objective(Loss::Exponential, &DVector::from_vec(vec![-1000.0]))
                .unwrap()
                - 1000.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn scaled_gradient_survives_underflow() {
        let ds = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 2.0]],
            &[1.0, 1.0],
            Task::Classification,
        )
        .unwrap();
        let w = DVector::from_vec(vec![2000.0, 1000.0]);
        assert_eq!(
            ds.gradient(Loss::Exponential, &w, None).unwrap(),
            DVector::zeros(2)
        );
        let sg = ds.scaled_gradient(Loss::Exponential, &w, None).unwrap();
        assert!((sg.log_scale + 2000.0 - std::f64::consts::LN_2).abs() < 1e-9);
        assert!((sg.direction[0] + 0.5).abs() < 1e-12 && (sg.direction[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_identity_example() {
        let ds = MatrixDataset::new(vec![DMatrix::identity(2, 2)], DVector::from_vec(vec![1.0]))
            .unwrap();
        let w = DMatrix::identity(2, 2);
        let e2 = (-2.0f64).exp();
        assert!((ds.objective(Loss::Exponential, &w).unwrap() - e2).abs() < 1e-15);
        let g = ds.gradient(Loss::Exponential, &w).unwrap();
        assert!((g - DMatrix::identity(2, 2) * -e2).amax() < 1e-15);
        assert_eq!(
            ds.objective(Loss::Exponential, &DMatrix::zeros(2, 2))
                .unwrap(),
            1.0
        );
        assert!(ds
            .gradient(Loss::Exponential, &DMatrix::zeros(3, 3))
            .is_err());
    }
}
