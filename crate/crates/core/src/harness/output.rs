//! Report bundles: `<out>/<id>/report.json`, `<out>/<id>/trajectory.csv`,
//! `<out>/figN.csv` and a merged `<out>/index.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentOutput, Figure, Series, Verdict, VerificationReport};
use crate::error::Result;
use crate::linalg::fmt17;

/// Serde adapter for floats that may be non-finite: finite values stay JSON
/// numbers, the rest become the strings `"NaN"`, `"inf"` and `"-inf"`.
pub mod real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(x: f64) -> Repr {
        if x.is_finite() {
            Repr::Num(x)
        } else {
            Repr::Text(x.to_string())
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => s
                .parse()
                .map_err(|_| E::custom(format!("not a number: {s}"))),
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod map {
        use std::collections::BTreeMap;

        use super::*;

        pub fn serialize<S: Serializer>(
            m: &BTreeMap<String, f64>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            s.collect_map(m.iter().map(|(k, v)| (k, to_repr(*v))))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<BTreeMap<String, f64>, D::Error> {
            BTreeMap::<String, Repr>::deserialize(d)?
                .into_iter()
                .map(|(k, v)| from_repr(v).map(|x| (k, x)))
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub experiment: String,
    pub verdict: Verdict,
    pub report: PathBuf,
    pub trajectory: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub figures: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub runs: Vec<IndexEntry>,
}

pub fn report_json(report: &VerificationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization is infallible")
}

/// `series,t,log_loss,w0,w1,...`; rows narrower than the widest are padded
/// with empty fields.
pub fn trajectory_csv(series: &[Series]) -> String {
    let width = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.w.len()))
        .max()
        .unwrap_or(0);
    let mut out = String::from("series,t,log_loss");
    for i in 0..width {
        let _ = write!(out, ",w{i}");
    }
    out.push('\n');
    for s in series {
        for p in &s.points {
            let _ = write!(out, "{},{},{}", csv_field(&s.name), p.t, fmt17(p.log_loss));
            for i in 0..width {
                out.push(',');
                if let Some(x) = p.w.get(i) {
                    out.push_str(&fmt17(*x));
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn figure_csv(fig: &Figure) -> String {
    let mut out = String::from("series");
    for c in &fig.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (label, row) in &fig.rows {
        out.push_str(&csv_field(label));
        for x in row {
            out.push(',');
            out.push_str(&fmt17(*x));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes one run's files under `dir` and returns its index entry.
pub fn write_run(dir: &Path, output: &ExperimentOutput) -> Result<IndexEntry> {
    let id = &output.report.experiment;
    let run_dir = dir.join(id);
    fs::create_dir_all(&run_dir)?;
    fs::write(run_dir.join("report.json"), report_json(&output.report))?;
    fs::write(
        run_dir.join("trajectory.csv"),
        trajectory_csv(&output.series),
    )?;
    let mut figures = Vec::new();
    for fig in &output.figures {
        let name = PathBuf::from(format!("{}.csv", fig.name));
        fs::write(dir.join(&name), figure_csv(fig))?;
        figures.push(name);
    }
    Ok(IndexEntry {
        experiment: id.clone(),
        verdict: output.report.verdict,
        report: PathBuf::from(id).join("report.json"),
        trajectory: PathBuf::from(id).join("trajectory.csv"),
        figures,
    })
}

/// Merges `entries` into `dir/index.json`, replacing runs of the same
/// experiment; the result is sorted by experiment id.
pub fn update_index(dir: &Path, entries: Vec<IndexEntry>) -> Result<Index> {
    let path = dir.join("index.json");
    let mut runs: BTreeMap<String, IndexEntry> = BTreeMap::new();
    if path.exists() {
        let old: Index = serde_json::from_str(&fs::read_to_string(&path)?)?;
        runs.extend(old.runs.into_iter().map(|e| (e.experiment.clone(), e)));
    }
    runs.extend(entries.into_iter().map(|e| (e.experiment.clone(), e)));
    let index = Index {
        runs: runs.into_values().collect(),
    };
    fs::create_dir_all(dir)?;
    fs::write(
        &path,
        serde_json::to_string_pretty(&index).expect("index serialization is infallible"),
    )?;
    Ok(index)
}

/// Writes every run and the merged index.
pub fn write_bundle(dir: &Path, outputs: &[&ExperimentOutput]) -> Result<Index> {
    let entries = outputs
        .iter()
        .map(|o| write_run(dir, o))
        .collect::<Result<Vec<_>>>()?;
    update_index(dir, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{RunConfig, SeriesPoint};

    fn output(id: &str, verdict: Verdict, figure: Option<&str>) -> ExperimentOutput {
        ExperimentOutput {
            report: VerificationReport {
                experiment: id.into(),
                verdict,
                checks: vec![],
                metrics: [("gap".to_string(), f64::NAN)].into(),
                iterations: 3,
                config: RunConfig::new(id),
                notes: vec![],
            },
            series: vec![Series {
                name: "s".into(),
                points: vec![SeriesPoint {
                    t: 0,
                    w: vec![1.0],
                    log_loss: 0.0,
                }],
            }],
            figures: figure
                .map(|f| Figure {
                    name: f.into(),
                    columns: vec!["x".into()],
                    rows: vec![("r".into(), vec![0.5])],
                })
                .into_iter()
                .collect(),
        }
    }

    #[test]
    fn bundles_merge_into_a_sorted_index() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &[&output("E6", Verdict::Confirmed, None)]).unwrap();
        let index = write_bundle(
            dir.path(),
            &[
                &output("E2", Verdict::Confirmed, Some("fig1a")),
                &output("E6", Verdict::Inconclusive, None),
            ],
        )
        .unwrap();
        let ids: Vec<_> = index
            .runs
            .iter()
            .map(|e| (e.experiment.as_str(), e.verdict))
            .collect();
        assert_eq!(
            ids,
            [("E2", Verdict::Confirmed), ("E6", Verdict::Inconclusive)]
        );
        assert!(dir.path().join("fig1a.csv").exists());
        let on_disk: Index =
            serde_json::from_str(&fs::read_to_string(dir.path().join("index.json")).unwrap())
                .unwrap();
        assert_eq!(on_disk, index);
        let report: VerificationReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join("E2/report.json")).unwrap())
                .unwrap();
        assert!(report.metrics["gap"].is_nan());
        assert_eq!(report.config, RunConfig::new("E2"));
    }

    #[test]
    fn trajectory_csv_pads_ragged_series() {
        let s = vec![
            Series {
                name: "a".into(),
                points: vec![SeriesPoint {
                    t: 0,
                    w: vec![1.0],
                    log_loss: 0.5,
                }],
            },
            Series {
                name: "b,c".into(),
                points: vec![SeriesPoint {
                    t: 3,
                    w: vec![0.1, 0.2],
                    log_loss: f64::NAN,
                }],
            },
        ];
        let text = trajectory_csv(&s);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "series,t,log_loss,w0,w1");
        assert!(lines[1].ends_with(','));
        assert!(lines[2].starts_with("\"b,c\",3,NaN,"));
        let x: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(x, 0.2);
    }

    #[test]
    fn non_finite_floats_round_trip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct T {
            #[serde(with = "real")]
            x: f64,
            #[serde(with = "real::map")]
            m: BTreeMap<String, f64>,
        }
        let t = T {
            x: f64::INFINITY,
            m: [("a".to_string(), -f64::INFINITY), ("b".to_string(), 0.1)].into(),
        };
        let back: T = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        let nan: T = serde_json::from_str(r#"{"x": "NaN", "m": {}}"#).unwrap();
        assert!(nan.x.is_nan());
    }
}
