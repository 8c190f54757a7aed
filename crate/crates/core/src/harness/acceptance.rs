//! The acceptance suite: numbered criteria, each reduced to pass/fail with a
//! one-line detail. Shared by the `acceptance` test target and `verify-all`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::experiments::{margin_norms, sub_seed, ADAGRAD_SETTLE};
use super::{
    adagrad_dependence, direction_distance, factored_margin_run, margin_datasets,
    primal_momentum_offsets, run_experiment, sd_margin_run, squared_factor_contrast, RunConfig,
    SdMarginRun, Verdict,
};
use crate::error::{Error, Result};
use crate::geometry::{Exponent, Norm, Potential, TieRule};
use crate::optimizers::{
    run, AdagradOptions, Algorithm, BatchSchedule, Fault, OptimizerConfig, Problem, Schedule,
    StopRule, Trajectory,
};
use crate::oracles::{
    bregman_projection, grid_margin, kkt_residual, max_margin, nonneg_span_residual,
};
use crate::problems::generate::{
    gaussian_matrix, gaussian_vector, realizable_regression, rng, separable_classification,
    simplex_point,
};
use crate::problems::{example1, Dataset, Loss};

/// Criteria that cannot pass as stated, with the reason. They still run and
/// still print FAIL; the test target tolerates them.
pub const KNOWN_UNATTAINABLE: &[(u32, &str)] = &[
    (
        4,
        "the limit offset of one-step primal momentum is 2·log u₀ − log u₁ for the anchor u = (1+β₁)W₁ − β₁W₀, not log(1+β₁)",
    ),
    (
        12,
        "the factored stationarity residual decays polynomially in ‖U‖, so about 0.8x per decade of iterations; \
         on d = 3 seeds it is still above 1e-2 after 10⁶ steps",
    ),
];

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    /// Experiment ids the criterion exercises, for `--filter`.
    pub tags: &'static [&'static str],
    run: fn(&mut Suite) -> Result<(bool, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub known_unattainable: Option<&'static str>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2}: {} | {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail
        )
    }
}

/// State shared across criteria: the fault under test and the margin runs
/// reused by several criteria.
pub struct Suite {
    fault: Fault,
    margin_runs: Option<Vec<(u64, Norm, Dataset, SdMarginRun)>>,
}

impl Suite {
    pub fn new(fault: Fault) -> Self {
        Suite {
            fault,
            margin_runs: None,
        }
    }

    fn margin_runs(&mut self) -> Result<&[(u64, Norm, Dataset, SdMarginRun)]> {
        if self.margin_runs.is_none() {
            let jobs: Vec<(u64, Norm, Dataset)> = margin_datasets()?
                .into_iter()
                .flat_map(|(seed, ds)| {
                    margin_norms()
                        .into_iter()
                        .map(move |n| (seed, n, ds.clone()))
                })
                .collect();
            let fault = self.fault;
            let runs = jobs
                .into_par_iter()
                .map(|(seed, norm, ds)| {
                    let alg = Algorithm::Steepest {
                        norm: norm.clone(),
                        tie: TieRule::Average,
                    };
                    let mut r =
                        sd_margin_run(&ds, &alg, 1_000_000, 1e-5, 0, fault).map_err(|f| f.error)?;
                    r.snapshots.clear();
                    Ok((seed, norm, ds, r))
                })
                .collect::<Result<Vec<_>>>()?;
            self.margin_runs = Some(runs);
        }
        Ok(self.margin_runs.as_deref().expect("filled above"))
    }
}

pub fn criteria() -> &'static [Criterion] {
    CRITERIA
}

/// Criteria matching `filter`: a comma-separated list of criterion numbers
/// or experiment ids (`E2` also selects `E2-primal`).
pub fn select(filter: Option<&str>) -> Vec<&'static Criterion> {
    let Some(filter) = filter else {
        return CRITERIA.iter().collect();
    };
    let terms: Vec<String> = filter
        .split(',')
        .map(|t| t.trim().to_ascii_uppercase())
        .filter(|t| !t.is_empty())
        .collect();
    CRITERIA
        .iter()
        .filter(|c| {
            terms.iter().any(|t| {
                t.trim_start_matches('C')
                    .parse::<u32>()
                    .is_ok_and(|n| n == c.id)
                    || c.tags.iter().any(|tag| {
                        let tag = tag.to_ascii_uppercase();
                        tag == *t || tag.starts_with(&format!("{t}-"))
                    })
            })
        })
        .collect()
}

/// Runs the selected criteria in order, reporting each result as it lands.
pub fn run_suite(
    selected: &[&Criterion],
    fault: Fault,
    mut on_result: impl FnMut(&CriterionResult),
) -> Vec<CriterionResult> {
    let mut suite = Suite::new(fault);
    selected
        .iter()
        .map(|c| {
            let (passed, detail) = match (c.run)(&mut suite) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            let known = KNOWN_UNATTAINABLE
                .iter()
                .find(|(id, _)| *id == c.id)
                .map(|(_, why)| *why);
            let r = CriterionResult {
                id: c.id,
                title: c.title,
                passed,
                detail,
                known_unattainable: known,
            };
            on_result(&r);
            r
        })
        .collect()
}

static CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "mirror descent reaches the Bregman projection (entropy, quadratic, squared-lp)",
        tags: &["E2"],
        run: c1,
    },
    Criterion { id: 2, title: "simplex exponentiated gradient reaches the max-entropy solution", tags: &["E3"], run: c2 },
    Criterion {
        id: 3,
        title: "dual momentum and minibatch mirror descent stay on the dual manifold",
        tags: &["E2"],
        run: c3,
    },
    Criterion {
        id: 4,
        title: "one-step primal momentum leaves the entropy projection with offset log(1+beta1)",
        tags: &["E2-primal"],
        run: c4,
    },
    Criterion { id: 5, title: "natural gradient limits depend on the step size; hybrid witness", tags: &["E4"], run: c5 },
    Criterion { id: 6, title: "l4/3 steepest descent limits depend on eta; flow misses min-norm", tags: &["E5"], run: c6 },
    Criterion {
        id: 7,
        title: "steepest descent reaches the max margin of its norm on 10 datasets",
        tags: &["E6"],
        run: c7,
    },
    Criterion { id: 8, title: "margin duality bound on random simplex weights", tags: &["E6"], run: c8 },
    Criterion { id: 9, title: "coordinate descent reaches the l1 max margin", tags: &["E7"], run: c9 },
    Criterion { id: 10, title: "AdaGrad diagonal settles; direction depends on eta", tags: &["E10"], run: c10 },
    Criterion { id: 11, title: "negative gradient converges into the support-vector cone", tags: &["E9"], run: c11 },
    Criterion {
        id: 12,
        title: "factorized GD approaches a nuclear-margin stationary point; squared loss depends on init scale",
        tags: &["E8"],
        run: c12,
    },
    Criterion { id: 13, title: "reductions between optimizers agree over 100 steps", tags: &["E1", "E6"], run: c13 },
    Criterion { id: 14, title: "oracles agree with brute force and random perturbations", tags: &["E1", "E6"], run: c14 },
];

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a: f64, b| {
        if b.is_nan() || a.is_nan() {
            f64::NAN
        } else {
            a.max(b)
        }
    })
}

fn least(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, |a: f64, b| {
        if b.is_nan() || a.is_nan() {
            f64::NAN
        } else {
            a.min(b)
        }
    })
}

/// A random underdetermined regression (`N = 2`, `d = 5`) with a positive start
/// and the three potential families under test.
fn regression_case(seed: u64) -> Result<(Dataset, DVector<f64>, Vec<Potential>)> {
    let ds = realizable_regression(2, 5, sub_seed(seed, 10))?;
    let w0 = gaussian_vector(&mut rng(sub_seed(seed, 11)), 5).map(|v| (0.5 * v).exp());
    let a = gaussian_matrix(&mut rng(sub_seed(seed, 12)), 5, 5);
    let d = a.transpose() * &a / 5.0 + DMatrix::identity(5, 5);
    let (num, den) = [(5, 4), (3, 2), (7, 4), (2, 1)][(seed % 4) as usize];
    let potentials = vec![
        Potential::Entropy,
        Potential::quadratic(d)?,
        Potential::squared_lp(Exponent::ratio(num, den)?)?,
    ];
    Ok((ds, w0, potentials))
}

/// Step size from the curvature of `L ∘ ∇ψ*` at the start.
fn mirror_eta(ds: &Dataset, potential: &Potential, w0: &DVector<f64>) -> Result<f64> {
    let x = ds.features();
    let h = potential.conjugate_hessian(&potential.grad(w0)?)?;
    let curvature = (x * h * x.transpose() * 2.0).symmetric_eigenvalues().max();
    Ok(0.5 / curvature)
}

fn mirror_run(
    ds: &Dataset,
    alg: &Algorithm,
    w0: &DVector<f64>,
    cfg: OptimizerConfig,
) -> Result<Trajectory> {
    Ok(run(
        alg,
        &Problem::new(ds, Loss::Squared),
        w0.clone(),
        &cfg,
        &mut |_| true,
    )?)
}

fn c1(_: &mut Suite) -> Result<(bool, String)> {
    let results = (0..20u64)
        .into_par_iter()
        .map(|seed| -> Result<Vec<(f64, f64)>> {
            let (ds, w0, potentials) = regression_case(seed)?;
            potentials
                .into_iter()
                .map(|p| {
                    let oracle = bregman_projection(&p, &ds, &w0)?;
                    let cfg = OptimizerConfig::constant(mirror_eta(&ds, &p, &w0)?, 200_000)
                        .with_stop(StopRule::LossBelow { tol: 1e-26 })
                        .with_safeguard(true);
                    let tr = mirror_run(
                        &ds,
                        &Algorithm::Mirror {
                            potential: p.clone(),
                        },
                        &w0,
                        cfg,
                    )?;
                    let (stat, feas) = kkt_residual(&p, &ds, &w0, tr.final_w())?;
                    Ok(((tr.final_w() - &oracle.w_star).norm(), stat.max(feas)))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<_> = results.into_iter().flatten().collect();
    let dist = worst(flat.iter().map(|r| r.0));
    let kkt = worst(flat.iter().map(|r| r.1));
    let ex = run_experiment(&RunConfig::new("E2")).map_err(|f| f.error)?;
    let ex_err = (ex.series[0]
        .points
        .last()
        .map(|p| DVector::from_vec(p.w.clone()))
        .unwrap_or(DVector::zeros(2))
        - DVector::from_vec(vec![0.5, 0.25]))
    .norm();
    let ok = dist < 1e-6 && kkt < 1e-8 && ex_err < 1e-6;
    Ok((ok, format!("{} runs: max distance {dist:.2e}, max KKT residual {kkt:.2e}; example1 error {ex_err:.2e}", flat.len())))
}

fn c2(_: &mut Suite) -> Result<(bool, String)> {
    let mut worst_dist = 0.0f64;
    let mut ok = true;
    for seed in 0..5u64 {
        let mut cfg = RunConfig::new("E3");
        cfg.seed = Some(seed);
        let out = run_experiment(&cfg).map_err(|f| f.error)?;
        ok &= out.report.verdict == Verdict::Confirmed;
        worst_dist = worst_dist.max(worst(
            out.report
                .checks
                .iter()
                .filter(|c| c.name.contains("distance"))
                .map(|c| c.value),
        ));
    }
    Ok((
        ok,
        format!("5 seeds incl. [0.2, 0.4, 0.4]: max distance {worst_dist:.2e}"),
    ))
}

fn c3(_: &mut Suite) -> Result<(bool, String)> {
    let mut cases = vec![(example1(), vec![Potential::Entropy])];
    for seed in 0..5u64 {
        let (ds, _, p) = regression_case(seed)?;
        cases.push((ds, p[..2].to_vec()));
    }
    let mut dist = 0.0f64;
    let mut manifold = 0.0f64;
    let mut runs = 0;
    for (ds, potentials) in &cases {
        let span = ds.span();
        for p in potentials {
            let w0 = p.minimizer(ds.dim());
            let z0 = p.grad(&w0)?;
            let oracle = bregman_projection(p, ds, &w0)?;
            let eta = mirror_eta(ds, p, &w0)?;
            let base = OptimizerConfig::constant(eta, 200_000)
                .with_stop(StopRule::LossBelow { tol: 1e-26 })
                .with_safeguard(true);
            let variants = [
                (
                    Algorithm::MirrorDualMomentum {
                        potential: p.clone(),
                    },
                    base.clone()
                        .with_momentum(Schedule::Constant(0.5), Schedule::Constant(0.0)),
                ),
                (
                    Algorithm::Mirror {
                        potential: p.clone(),
                    },
                    base.clone()
                        .with_batch(BatchSchedule::Minibatch { size: 1, seed: 7 }),
                ),
            ];
            for (alg, cfg) in variants {
                let prob = Problem::new(ds, Loss::Squared);
                let tr = run(&alg, &prob, w0.clone(), &cfg, &mut |info| {
                    if let Some(z) = &info.after.z {
                        manifold = manifold.max(span.residual_norm(&(z - &z0)));
                    }
                    true
                })?;
                dist = dist.max((tr.final_w() - &oracle.w_star).norm());
                runs += 1;
            }
        }
    }
    Ok((
        dist < 1e-6 && manifold < 1e-9,
        format!("{runs} runs: max distance {dist:.2e}, max manifold residual {manifold:.2e}"),
    ))
}

fn c4(_: &mut Suite) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for beta1 in [0.1, 0.5] {
        let r = primal_momentum_offsets(beta1, 0.12, 100_000, 1e-24, 0)?;
        let offset_err = (r.witness - beta1.ln_1p()).abs();
        ok &= r.feasibility < 1e-8 && r.stationarity > 1e-2 && offset_err < 1e-4;
        parts.push(format!(
            "beta1={beta1}: KKT residual {:.3e}, offset {:.6} vs log(1+beta1) {:.6} (anchor prediction {:.6})",
            r.stationarity,
            r.witness,
            beta1.ln_1p(),
            r.predicted
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn experiment_passes(id: &str, expected: Verdict) -> Result<(bool, String)> {
    let out = run_experiment(&RunConfig::new(id)).map_err(|f| f.error)?;
    let r = &out.report;
    let failed: Vec<_> = r
        .failed_checks()
        .map(|c| format!("{} = {:.3e}", c.name, c.value))
        .collect();
    let detail = if failed.is_empty() {
        let gaps = r
            .checks
            .iter()
            .filter(|c| c.name.starts_with("limit gap"))
            .map(|c| c.value);
        format!(
            "{} checks pass, verdict {:?}, min pairwise gap {:.2e}",
            r.checks.len(),
            r.verdict,
            least(gaps)
        )
    } else {
        format!("verdict {:?}; failing: {}", r.verdict, failed.join(", "))
    };
    Ok((r.verdict == expected, detail))
}

fn c5(_: &mut Suite) -> Result<(bool, String)> {
    experiment_passes("E4", Verdict::RefutedAsExpected)
}

fn c6(_: &mut Suite) -> Result<(bool, String)> {
    experiment_passes("E5", Verdict::RefutedAsExpected)
}

fn c7(suite: &mut Suite) -> Result<(bool, String)> {
    let runs = suite.margin_runs()?;
    let gap = worst(runs.iter().map(|r| r.3.margin_gap));
    let increases: usize = runs.iter().map(|r| r.3.monotone.violations).sum();
    let bound = runs.iter().all(|r| r.3.bound.holds());
    let ratio = worst(runs.iter().map(|r| r.3.square_ratio));
    let tail = worst(runs.iter().map(|r| r.3.tail_fraction));
    let iters = runs.iter().map(|r| r.3.iterations).max().unwrap_or(0);
    let ok = gap < 1e-2
        && increases == 0
        && bound
        && ratio <= 1.0 + 1e-9
        && tail < 1e-2
        && iters <= 1_000_000;
    Ok((
        ok,
        format!(
            "{} runs: max gap {gap:.2e}, loss increases {increases}, margin bound {}, square-sum ratio {ratio:.3}, tail {tail:.1e}, max iterations {iters}",
            runs.len(),
            if bound { "holds" } else { "violated" }
        ),
    ))
}

fn c8(_: &mut Suite) -> Result<(bool, String)> {
    let mut worst_ratio = f64::INFINITY;
    let mut pairs = 0;
    for (seed, ds) in margin_datasets()? {
        let x = ds.signed_features();
        for norm in margin_norms() {
            let cert = max_margin(&norm, &ds)?;
            let mut r = rng(sub_seed(seed, 20));
            for _ in 0..1000 {
                let alpha = simplex_point(&mut r, ds.n_examples());
                worst_ratio = worst_ratio.min(norm.dual_value(&x.tr_mul(&alpha)) / cert.gamma);
            }
            pairs += 1;
        }
    }
    Ok((
        worst_ratio >= 1.0 - 1e-6,
        format!(
            "{pairs} norm/dataset pairs x 1000 weights: min ||X^T r||*/gamma = {worst_ratio:.6}"
        ),
    ))
}

fn c9(suite: &mut Suite) -> Result<(bool, String)> {
    let fault = suite.fault;
    let gaps = margin_datasets()?
        .into_par_iter()
        .map(|(_, ds)| {
            let alg = Algorithm::Coordinate {
                tie: TieRule::Average,
            };
            sd_margin_run(&ds, &alg, 1_000_000, 1e-3, 0, fault)
                .map(|r| r.margin_gap)
                .map_err(|f| f.error)
        })
        .collect::<Result<Vec<_>>>()?;
    let gap = worst(gaps.iter().cloned());
    Ok((
        gap < 1e-2,
        format!("{} datasets: max l1 margin gap {gap:.2e}", gaps.len()),
    ))
}

fn c10(_: &mut Suite) -> Result<(bool, String)> {
    let r =
        adagrad_dependence(1, (0.05, 0.5), 300_000_000, ADAGRAD_SETTLE, 0).map_err(|f| f.error)?;
    let ok = r.nondecreasing.0
        && r.nondecreasing.1
        && r.final_increment.0.max(r.final_increment.1) < 1e-8
        && r.direction_gap > 1e-2;
    Ok((
        ok,
        format!(
            "diagonal nondecreasing {}/{}, final-window increment {:.2e}/{:.2e} after {}/{} steps, direction gap {:.3e}",
            r.nondecreasing.0,
            r.nondecreasing.1,
            r.final_increment.0,
            r.final_increment.1,
            r.iterations_each.0,
            r.iterations_each.1,
            r.direction_gap
        ),
    ))
}

fn c11(suite: &mut Suite) -> Result<(bool, String)> {
    let runs = suite.margin_runs()?;
    let res = runs
        .iter()
        .map(|(_, _, ds, r)| {
            nonneg_span_residual(ds, &r.certificate.support, &r.neg_grad_direction)
        })
        .collect::<Result<Vec<_>>>()?;
    let w = worst(res.iter().cloned());
    Ok((
        w < 1e-3,
        format!("{} runs: max support-cone residual {w:.2e}", res.len()),
    ))
}

fn c12(_: &mut Suite) -> Result<(bool, String)> {
    let runs = (0..5u64)
        .into_par_iter()
        .map(|seed| factored_margin_run(seed, 1_000_000, 0).map(|(r, _)| (seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let stat = worst(runs.iter().map(|r| r.1.stationarity));
    let cs = worst(runs.iter().map(|r| r.1.complementary_slackness));
    let failing: Vec<_> = runs
        .iter()
        .filter(|(_, r)| !(r.stationarity < 1e-2 && r.complementary_slackness < 1e-4))
        .map(|(s, r)| format!("seed {s}: residual {:.2e}", r.stationarity))
        .collect();
    let (gap, loss) = squared_factor_contrast(0, (1.0, 0.1), 200_000)?;
    let ok = failing.is_empty() && gap > 1e-3 && loss < 1e-12;
    let mut detail = format!("max stationarity {stat:.2e}, max CS violation {cs:.2e}; squared-loss init-scale gap {gap:.3e}");
    if !failing.is_empty() {
        detail.push_str(&format!(" [{}]", failing.join(", ")));
    }
    Ok((ok, detail))
}

fn trajectory_gap(
    prob: &Problem,
    a: &Algorithm,
    b: &Algorithm,
    w0: &DVector<f64>,
    eta: f64,
) -> Result<f64> {
    let cfg = OptimizerConfig::constant(eta, 100).with_cadence(1);
    let ta = run(a, prob, w0.clone(), &cfg, &mut |_| true)?;
    let tb = run(b, prob, w0.clone(), &cfg, &mut |_| true)?;
    if ta.snapshots.len() != tb.snapshots.len() {
        return Err(Error::InvalidConfig(
            "trajectories of different length".into(),
        ));
    }
    Ok(worst(
        ta.snapshots
            .iter()
            .zip(&tb.snapshots)
            .map(|(x, y)| (&x.w - &y.w).amax()),
    ))
}

fn c13(_: &mut Suite) -> Result<(bool, String)> {
    let mut gaps: Vec<(&str, f64)> = Vec::new();
    for seed in 0..5u64 {
        let reg = realizable_regression(3, 5, sub_seed(seed, 30))?;
        let cls = separable_classification(6, 3, 0.1, sub_seed(seed, 31))?;
        let w0 = gaussian_vector(&mut rng(sub_seed(seed, 32)), 5) * 0.1;
        let v0 = gaussian_vector(&mut rng(sub_seed(seed, 33)), 3) * 0.1;
        let a = gaussian_matrix(&mut rng(sub_seed(seed, 34)), 5, 5);
        let d = a.transpose() * &a / 5.0 + DMatrix::identity(5, 5);
        let sq = Problem::new(&reg, Loss::Squared);
        let ex = Problem::new(&cls, Loss::Exponential);
        let sd = |norm: Norm| Algorithm::Steepest {
            norm,
            tie: TieRule::Average,
        };
        let coord = Algorithm::Coordinate {
            tie: TieRule::Average,
        };
        let quad = Potential::quadratic(d)?;
        let frozen = Algorithm::Adagrad {
            options: AdagradOptions {
                g_init: Some(vec![1.0; 5]),
                epsilon: None,
                frozen: true,
            },
        };
        gaps.push((
            "sd(l2)=gd",
            trajectory_gap(&sq, &sd(Norm::l2()), &Algorithm::Gd, &w0, 0.01)?,
        ));
        gaps.push((
            "sd(l2)=gd",
            trajectory_gap(&ex, &sd(Norm::l2()), &Algorithm::Gd, &v0, 0.1)?,
        ));
        gaps.push((
            "sd(l1)=cd",
            trajectory_gap(&sq, &sd(Norm::l1()), &coord, &w0, 0.01)?,
        ));
        gaps.push((
            "sd(l1)=cd",
            trajectory_gap(&ex, &sd(Norm::l1()), &coord, &v0, 0.1)?,
        ));
        gaps.push((
            "md(sq-euclid)=gd",
            trajectory_gap(
                &sq,
                &Algorithm::Mirror {
                    potential: Potential::SquaredEuclidean,
                },
                &Algorithm::Gd,
                &w0,
                0.01,
            )?,
        ));
        gaps.push((
            "ngd(D)=md(D)",
            trajectory_gap(
                &sq,
                &Algorithm::NaturalGradient {
                    potential: quad.clone(),
                },
                &Algorithm::Mirror { potential: quad },
                &w0,
                0.01,
            )?,
        ));
        gaps.push((
            "frozen adagrad=gd",
            trajectory_gap(&sq, &frozen, &Algorithm::Gd, &w0, 0.01)?,
        ));
    }
    let w = worst(gaps.iter().map(|g| g.1));
    let bad: Vec<_> = gaps
        .iter()
        .filter(|g| !(g.1 < 1e-10))
        .map(|g| format!("{} {:.1e}", g.0, g.1))
        .collect();
    let mut detail = format!("{} pairs x 100 steps: max gap {w:.2e}", gaps.len());
    if !bad.is_empty() {
        detail.push_str(&format!(" [{}]", bad.join(", ")));
    }
    Ok((bad.is_empty(), detail))
}

/// Largest `D_ψ(w*, w₀) − D_ψ(w* + v, w₀)` over random feasible `v`; positive
/// means a perturbation beat the projection.
fn perturbation_excess(
    p: &Potential,
    ds: &Dataset,
    w0: &DVector<f64>,
    w_star: &DVector<f64>,
    seed: u64,
) -> Result<f64> {
    let x = ds.features();
    let pinv = x
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let null = DMatrix::identity(ds.dim(), ds.dim()) - pinv * x;
    let base = p.bregman_divergence(w_star, w0)?;
    let mut r = rng(seed);
    let mut excess = f64::NEG_INFINITY;
    for k in 0..1000 {
        let dir = &null * gaussian_vector(&mut r, ds.dim());
        let scale =
            10f64.powf(-4.0 + 4.0 * (k as f64 / 999.0)) * w_star.norm().max(1.0) / dir.norm();
        let mut v = dir * scale;
        while (w_star + &v).iter().any(|&c| c <= 0.0) && *p == Potential::Entropy {
            v *= 0.5;
        }
        excess = excess.max(base - p.bregman_divergence(&(w_star + &v), w0)?);
    }
    Ok(excess)
}

fn c14(_: &mut Suite) -> Result<(bool, String)> {
    let mut norms = margin_norms();
    norms.push(Norm::l1());
    norms.push(Norm::linf());
    let jobs: Vec<(Dataset, Norm)> = margin_datasets()?
        .into_iter()
        .flat_map(|(_, ds)| norms.iter().map(move |n| (ds.clone(), n.clone())))
        .collect();
    let gaps = jobs
        .par_iter()
        .map(|(ds, norm)| {
            let cert = max_margin(norm, ds)?;
            let resolution = if ds.dim() == 2 { 1e-3 } else { 1e-2 };
            let (w, g) = grid_margin(norm, ds, resolution)?;
            let dir = if cert.degenerate {
                0.0
            } else {
                direction_distance(&w, &cert.w_star, norm)?
            };
            Ok(((cert.gamma - g).abs(), dir))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let gamma_gap = worst(gaps.iter().map(|g| g.0));
    let dir_gap = worst(gaps.iter().map(|g| g.1));
    let excess = (0..20u64)
        .into_par_iter()
        .map(|seed| -> Result<f64> {
            let (ds, w0, potentials) = regression_case(seed)?;
            let mut e = f64::NEG_INFINITY;
            for p in &potentials {
                let proj = bregman_projection(p, &ds, &w0)?;
                e = e.max(perturbation_excess(
                    p,
                    &ds,
                    &w0,
                    &proj.w_star,
                    sub_seed(seed, 40),
                )?);
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((
        gamma_gap < 1e-4 && dir_gap < 1e-3 && excess < 0.0,
        format!(
            "{} certificates: max |gamma - grid| {gamma_gap:.2e}, max direction gap {dir_gap:.2e}; 60 projections x 1000 perturbations: best perturbation still {:.2e} worse",
            jobs.len(),
            -excess
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_select_by_number_and_experiment() {
        let ids = |f: &str| select(Some(f)).iter().map(|c| c.id).collect::<Vec<_>>();
        assert_eq!(ids("E2"), vec![1, 3, 4]);
        assert_eq!(ids("E1"), vec![13, 14]);
        assert_eq!(ids("7,c9"), vec![7, 9]);
        assert_eq!(select(None).len(), 14);
        assert!(ids("E99").is_empty());
    }

    #[test]
    fn quick_criteria_pass() {
        let picked: Vec<_> = select(Some("13")).into_iter().collect();
        let results = run_suite(&picked, Fault::None, |_| {});
        assert!(results[0].passed, "{}", results[0].detail);
    }
}
