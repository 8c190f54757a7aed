//! Datasets, losses and empirical objectives for the vector and factorized settings.

mod dataset;
pub mod generate;
mod loss;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, Evaluation, MatrixDataset, ScaledGradient, Task, OBJECTIVE_CAP};
pub use loss::{loss_derivative, loss_value, Loss, LossFamily};

use crate::error::{Error, Result};

/// Either kind of dataset, as loaded from a file.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyDataset {
    Vector(Dataset),
    Matrix(MatrixDataset),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum DatasetFile {
    Vector {
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task: Option<Task>,
    },
    Matrix {
        features: Vec<Vec<Vec<f64>>>,
        labels: Vec<f64>,
    },
}

impl AnyDataset {
    /// Parses the JSON dataset format. Vector datasets without an explicit
    /// `task` are classification when every label is ±1.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidDataset(e.to_string()))?;
        match file {
            DatasetFile::Vector {
                features,
                labels,
                task,
            } => {
                let task = task.unwrap_or_else(|| {
                    if !labels.is_empty() && labels.iter().all(|&y| y == 1.0 || y == -1.0) {
                        Task::Classification
                    } else {
                        Task::Regression
                    }
                });
                Ok(AnyDataset::Vector(Dataset::from_rows(
                    &features, &labels, task,
                )?))
            }
            DatasetFile::Matrix { features, labels } => {
                let mats = features
                    .iter()
                    .map(|rows| {
                        let d = rows.len();
                        if rows.iter().any(|r| r.len() != d) {
                            return Err(Error::InvalidDataset(
                                "feature matrices must be square".into(),
                            ));
                        }
                        Ok(DMatrix::from_row_iterator(
                            d,
                            d,
                            rows.iter().flatten().cloned(),
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnyDataset::Matrix(MatrixDataset::new(
                    mats,
                    DVector::from_vec(labels),
                )?))
            }
        }
    }

    pub fn to_json(&self) -> String {
        let file = match self {
            AnyDataset::Vector(ds) => DatasetFile::Vector {
                features: ds
                    .features()
                    .row_iter()
                    .map(|r| r.iter().cloned().collect())
                    .collect(),
                labels: ds.labels().iter().cloned().collect(),
                task: Some(ds.task()),
            },
            AnyDataset::Matrix(ds) => DatasetFile::Matrix {
                features: ds
                    .features()
                    .iter()
                    .map(|x| x.row_iter().map(|r| r.iter().cloned().collect()).collect())
                    .collect(),
                labels: ds.labels().iter().cloned().collect(),
            },
        };
        serde_json::to_string(&file).expect("dataset serialization is infallible")
    }

    pub fn load(path: &Path) -> Result<Self> {
        AnyDataset::from_json(&std::fs::read_to_string(path)?)
    }

    /// A built-in dataset by name, or a JSON file path.
    pub fn resolve(name: &str) -> Result<Self> {
        match builtin(name) {
            Some(ds) => Ok(AnyDataset::Vector(ds)),
            None => AnyDataset::load(Path::new(name)),
        }
    }
}

/// Built-in datasets: `example1`, `example2` (same data) and `example3`.
pub fn builtin(name: &str) -> Option<Dataset> {
    match name {
        "example1" | "example2" => Some(example1()),
        "example3" => Some(example3()),
        _ => None,
    }
}

/// `{([1, 2], 1)}`.
pub fn example1() -> Dataset {
    Dataset::from_rows(&[vec![1.0, 2.0]], &[1.0], Task::Regression).expect("valid built-in")
}

/// `{([1, 1, 1], 1), ([1, 2, 0], 10)}`.
pub fn example3() -> Dataset {
    Dataset::from_rows(
        &[vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 0.0]],
        &[1.0, 10.0],
        Task::Regression,
    )
    .expect("valid built-in")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let text = r#"{"features": [[1, 0], [0, 1]], "labels": [1, -1], "kind": "vector"}"#;
        let ds = AnyDataset::from_json(text).unwrap();
        match &ds {
            AnyDataset::Vector(v) => assert_eq!(v.task(), Task::Classification),
            _ => panic!("expected vector dataset"),
        }
        assert_eq!(AnyDataset::from_json(&ds.to_json()).unwrap(), ds);

        let text = r#"{"features": [[[1, 0], [0, -1]]], "labels": [1], "kind": "matrix"}"#;
        let ds = AnyDataset::from_json(text).unwrap();
        assert_eq!(AnyDataset::from_json(&ds.to_json()).unwrap(), ds);
    }

    #[test]
    fn json_rejects_unknown_fields_and_ragged_rows() {
        assert!(AnyDataset::from_json(
            r#"{"features": [[1]], "labels": [1], "kind": "vector", "x": 1}"#
        )
        .is_err());
        assert!(AnyDataset::from_json(
            r#"{"features": [[1, 2], [1]], "labels": [1, 2], "kind": "vector"}"#
        )
        .is_err());
    }

    #[test]
    fn builtins() {
        assert_eq!(builtin("example2"), Some(example1()));
        assert_eq!(example3().n_examples(), 2);
        assert!(builtin("nope").is_none());
    }
}
