//! Experiment registry, verification reports and report bundles.
//!
//! Every experiment is a fixed recipe (dataset, loss, algorithm, oracle) whose
//! numeric knobs can be overridden through a [`RunConfig`]. Running one
//! yields a [`VerificationReport`] plus the trajectories it recorded.

pub mod acceptance;
pub mod diagnostics;
mod experiments;
pub mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{Fault, Snapshot};
use crate::problems::{Loss, LossFamily};

pub use diagnostics::{
    cauchy_gap, direction_distance, factored_complementary_slackness, manifold_residual,
    margin_gap, MarginBoundTracker, MonotoneTracker, SquareSumTracker, CAUCHY_WINDOW,
};
pub use experiments::{
    adagrad_dependence, factored_dataset, factored_margin_run, hybrid_witness, margin_datasets,
    margin_norms, primal_momentum_offsets, sd_margin_run, squared_factor_contrast,
    AdagradDependence, FactoredMarginRun, PrimalMomentumRun, SdMarginRun,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Confirmed,
    RefutedAsExpected,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Below,
    Above,
}

/// One metric compared against a threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "output::real")]
    pub value: f64,
    #[serde(with = "output::real")]
    pub threshold: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            relation: Relation::Below,
            passed: value < threshold,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            relation: Relation::Above,
            passed: value > threshold,
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Check::below(name, if ok { 0.0 } else { 1.0 }, 0.5)
    }
}

/// Which limit an experiment measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Distance of the limit point to an oracle point.
    LimitPoint,
    /// Distance or margin gap of the limit direction to an oracle direction.
    LimitDirection,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationPlan {
    pub oracle: &'static str,
    pub metric: Metric,
    pub tolerance: f64,
}

/// Default values of the overridable knobs. `None` means the experiment has
/// no such knob and rejects an override for it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Defaults {
    pub seed: u64,
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub budget: usize,
    pub tol: Option<f64>,
    pub cadence: usize,
}

type Runner = fn(&Context) -> std::result::Result<ExperimentOutput, ExperimentFailure>;

#[derive(Clone, Serialize)]
pub struct ExperimentSpec {
    pub id: &'static str,
    pub summary: &'static str,
    pub dataset: &'static str,
    pub loss: Loss,
    pub algorithm: &'static str,
    /// The experiment exhibits a bias that the naive claim gets wrong.
    pub counterexample: bool,
    pub plan: VerificationPlan,
    pub defaults: Defaults,
    #[serde(skip)]
    runner: Runner,
}

impl std::fmt::Debug for ExperimentSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExperimentSpec")
            .field("id", &self.id)
            .finish_non_exhaustive()
    }
}

impl ExperimentSpec {
    /// Limit-point plans go with unique-root losses and limit-direction plans
    /// with strict-monotone losses.
    pub fn validate(&self) -> Result<()> {
        let expected = match self.loss.family() {
            LossFamily::UniqueFiniteRoot => Metric::LimitPoint,
            LossFamily::StrictMonotone => Metric::LimitDirection,
        };
        if self.plan.metric != expected {
            return Err(Error::InvalidConfig(format!(
                "{}: {:?} loss needs a {:?} plan",
                self.id, self.loss, expected
            )));
        }
        if !(self.plan.tolerance > 0.0) || self.defaults.budget == 0 {
            return Err(Error::InvalidConfig(format!(
                "{}: bad plan tolerance or budget",
                self.id
            )));
        }
        Ok(())
    }
}

/// Knob overrides. Each must be one the experiment exposes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Overrides::is_empty")]
    pub overrides: Overrides,
    /// Record every `cadence`-th iterate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "is_no_fault")]
    pub fault: Fault,
}

fn is_no_fault(f: &Fault) -> bool {
    *f == Fault::None
}

impl RunConfig {
    pub fn new(experiment: impl Into<String>) -> Self {
        RunConfig {
            experiment: experiment.into(),
            seed: None,
            overrides: Overrides::default(),
            cadence: None,
            out: None,
            fault: Fault::None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization is infallible")
    }

    /// Checks values and that every override names a knob of the experiment.
    pub fn validate(&self) -> Result<&'static ExperimentSpec> {
        let spec = find(&self.experiment)?;
        let o = &self.overrides;
        let knob = |name: &str, present: bool, exposed: bool| {
            if present && !exposed {
                Err(Error::InvalidConfig(format!(
                    "{} has no `{name}` parameter",
                    spec.id
                )))
            } else {
                Ok(())
            }
        };
        knob("eta", o.eta.is_some(), spec.defaults.eta.is_some())?;
        knob("beta", o.beta.is_some(), spec.defaults.beta.is_some())?;
        knob("gamma", o.gamma.is_some(), spec.defaults.gamma.is_some())?;
        knob("tol", o.tol.is_some(), spec.defaults.tol.is_some())?;
        if let Some(eta) = o.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "eta must be positive and finite, got {eta}"
                )));
            }
        }
        for (name, v) in [("beta", o.beta), ("gamma", o.gamma)] {
            if let Some(v) = v {
                if !(0.0..1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!(
                        "{name} must lie in [0, 1), got {v}"
                    )));
                }
            }
        }
        if o.budget == Some(0) {
            return Err(Error::InvalidConfig("budget must be at least 1".into()));
        }
        if let Some(tol) = o.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "tol must be positive and finite, got {tol}"
                )));
            }
        }
        if self.cadence == Some(0) {
            return Err(Error::InvalidConfig("cadence must be at least 1".into()));
        }
        Ok(spec)
    }
}

/// Resolved knobs handed to a runner.
#[derive(Clone, Debug)]
pub struct Context {
    pub spec: &'static ExperimentSpec,
    pub config: RunConfig,
}

impl Context {
    pub fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(self.spec.defaults.seed)
    }

    pub fn eta(&self) -> f64 {
        self.config
            .overrides
            .eta
            .or(self.spec.defaults.eta)
            .unwrap_or(f64::NAN)
    }

    pub fn eta_overridden(&self) -> bool {
        self.config.overrides.eta.is_some()
    }

    pub fn beta(&self) -> f64 {
        self.config
            .overrides
            .beta
            .or(self.spec.defaults.beta)
            .unwrap_or(0.0)
    }

    pub fn gamma(&self) -> f64 {
        self.config
            .overrides
            .gamma
            .or(self.spec.defaults.gamma)
            .unwrap_or(0.0)
    }

    pub fn budget(&self) -> usize {
        self.config
            .overrides
            .budget
            .unwrap_or(self.spec.defaults.budget)
    }

    pub fn tol(&self) -> f64 {
        self.config
            .overrides
            .tol
            .or(self.spec.defaults.tol)
            .unwrap_or(f64::NAN)
    }

    pub fn cadence(&self) -> usize {
        self.config.cadence.unwrap_or(self.spec.defaults.cadence)
    }

    pub fn fault(&self) -> Fault {
        self.config.fault
    }
}

/// One recorded point of a named series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub t: usize,
    pub w: Vec<f64>,
    pub log_loss: f64,
}

/// A trajectory (or any indexed sequence of points) under a label.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<SeriesPoint>,
}

impl Series {
    pub fn from_snapshots(name: impl Into<String>, snapshots: &[Snapshot]) -> Self {
        Series {
            name: name.into(),
            points: snapshots
                .iter()
                .map(|s| SeriesPoint {
                    t: s.t,
                    w: s.w.iter().cloned().collect(),
                    log_loss: s.log_loss,
                })
                .collect(),
        }
    }

    pub fn single(name: impl Into<String>, t: usize, w: &DVector<f64>, log_loss: f64) -> Self {
        Series {
            name: name.into(),
            points: vec![SeriesPoint {
                t,
                w: w.iter().cloned().collect(),
                log_loss,
            }],
        }
    }
}

/// Plot-ready table: a label column followed by numeric columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub experiment: String,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    #[serde(with = "output::real::map")]
    pub metrics: BTreeMap<String, f64>,
    pub iterations: usize,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: VerificationReport,
    pub series: Vec<Series>,
    pub figures: Vec<Figure>,
}

/// An aborted run, with whatever it recorded before the error.
#[derive(Debug)]
pub struct ExperimentFailure {
    pub error: Error,
    pub partial: Vec<Series>,
}

impl From<Error> for ExperimentFailure {
    fn from(error: Error) -> Self {
        ExperimentFailure {
            error,
            partial: Vec::new(),
        }
    }
}

impl From<Box<crate::optimizers::Aborted>> for ExperimentFailure {
    fn from(a: Box<crate::optimizers::Aborted>) -> Self {
        ExperimentFailure {
            partial: vec![Series::from_snapshots("aborted", &a.partial.snapshots)],
            error: a.error,
        }
    }
}

/// Accumulates checks and metrics while an experiment runs.
#[derive(Clone, Debug, Default)]
pub(crate) struct ReportBuilder {
    checks: Vec<Check>,
    metrics: BTreeMap<String, f64>,
    notes: Vec<String>,
    iterations: usize,
}

impl ReportBuilder {
    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn iterations(&mut self, n: usize) {
        self.iterations += n;
    }

    /// All checks passing gives `Confirmed`, or `RefutedAsExpected` for a
    /// counterexample; anything else is `Inconclusive`.
    pub fn finish(self, ctx: &Context) -> VerificationReport {
        let all = !self.checks.is_empty() && self.checks.iter().all(|c| c.passed);
        let verdict = match (all, ctx.spec.counterexample) {
            (true, false) => Verdict::Confirmed,
            (true, true) => Verdict::RefutedAsExpected,
            (false, _) => Verdict::Inconclusive,
        };
        let mut config = ctx.config.clone();
        config.seed = Some(ctx.seed());
        VerificationReport {
            experiment: ctx.spec.id.to_string(),
            verdict,
            checks: self.checks,
            metrics: self.metrics,
            iterations: self.iterations,
            config,
            notes: self.notes,
        }
    }
}

/// The built-in experiments, in id order.
pub fn registry() -> &'static [ExperimentSpec] {
    experiments::REGISTRY
}

pub fn find(id: &str) -> Result<&'static ExperimentSpec> {
    registry()
        .iter()
        .find(|s| s.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| Error::UnknownExperiment(id.to_string()))
}

/// Runs one experiment. Deterministic given the config.
pub fn run_experiment(
    config: &RunConfig,
) -> std::result::Result<ExperimentOutput, ExperimentFailure> {
    let spec = config.validate()?;
    spec.validate()?;
    let ctx = Context {
        spec,
        config: config.clone(),
    };
    (spec.runner)(&ctx)
}

/// Runs several experiments on the rayon pool; results keep input order.
pub fn run_many(
    configs: &[RunConfig],
) -> Vec<std::result::Result<ExperimentOutput, ExperimentFailure>> {
    configs.par_iter().map(run_experiment).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_specs_are_consistent() {
        let ids: Vec<_> = registry().iter().map(|s| s.id).collect();
        for id in [
            "E1",
            "E2",
            "E2-primal",
            "E3",
            "E4",
            "E5",
            "E6",
            "E7",
            "E8",
            "E9",
            "E10",
        ] {
            assert!(ids.contains(&id), "{id}");
        }
        for s in registry() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn plan_must_match_loss_family() {
        let mut s = find("E1").unwrap().clone();
        s.plan.metric = Metric::LimitDirection;
        assert!(s.validate().is_err());
    }

    #[test]
    fn overrides_are_checked_against_the_experiment() {
        let mut c = RunConfig::new("E1");
        c.overrides.eta = Some(-1.0);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let mut c = RunConfig::new("E3");
        c.overrides.beta = Some(0.5);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        assert!(matches!(
            RunConfig::new("E99").validate(),
            Err(Error::UnknownExperiment(_))
        ));
    }

    #[test]
    fn config_json_round_trip_and_unknown_keys() {
        let mut c = RunConfig::new("E2");
        c.seed = Some(3);
        c.overrides.eta = Some(0.125);
        c.cadence = Some(10);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(RunConfig::from_json(r#"{"experiment": "E1", "speed": 2}"#).is_err());
        assert!(RunConfig::from_json(r#"{"experiment": "E1", "overrides": {"etaa": 2}}"#).is_err());
    }

    #[test]
    fn verdict_follows_checks() {
        let ctx = Context {
            spec: find("E1").unwrap(),
            config: RunConfig::new("E1"),
        };
        let mut b = ReportBuilder::default();
        b.check(Check::below("d", 1e-9, 1e-6));
        assert_eq!(b.clone().finish(&ctx).verdict, Verdict::Confirmed);
        b.check(Check::below("e", 1.0, 1e-6));
        assert_eq!(b.finish(&ctx).verdict, Verdict::Inconclusive);
        let ctx = Context {
            spec: find("E5").unwrap(),
            config: RunConfig::new("E5"),
        };
        let mut b = ReportBuilder::default();
        b.check(Check::above("gap", 1.0, 1e-3));
        assert_eq!(b.finish(&ctx).verdict, Verdict::RefutedAsExpected);
    }
}
