use nalgebra::{DMatrix, DVector};

use super::diagnostics::{
    cauchy_gap, direction_distance, factored_complementary_slackness, manifold_residual,
    margin_gap, MarginBoundTracker, MonotoneTracker, SquareSumTracker, CAUCHY_WINDOW,
};
use super::{
    Check, Context, Defaults, ExperimentFailure, ExperimentOutput, ExperimentSpec, Figure, Metric,
    ReportBuilder, Series, VerificationPlan,
};
use crate::error::{Error, Result};
use crate::geometry::{Exponent, Norm, Potential, TieRule};
use crate::optimizers::{
    flow_limit, integrate_flow, run, run_factored, AdagradOptions, AffineConstraint, Algorithm,
    BatchSchedule, FactorStep, Fault, FlowKind, FlowOptions, OptimizerConfig, OptimizerState,
    Problem, Schedule, Snapshot, StepParams, StopRule, Trajectory,
};
use crate::oracles::{
    bregman_projection, bregman_projection_with, factored_stationarity_residual, kkt_residual,
    max_margin, nonneg_span_residual, nuclear_margin, MarginCertificate,
};
use crate::problems::generate::{
    gaussian_matrix, gaussian_vector, psd_regression, psd_separable, realizable_regression, rng,
    separable_classification, simplex_regression,
};
use crate::problems::{example1, example3, Dataset, Loss, MatrixDataset, Task};

type Outcome = std::result::Result<ExperimentOutput, ExperimentFailure>;

/// Step cap for loss-adaptive runs; large enough never to bind before the
/// loss underflows.
const ETA_MAX: f64 = 1e300;
/// Step size of the single finite step before the hybrid flow.
const HYBRID_ETA: f64 = 0.1;
const SWEEP_BETA_GAMMA: [f64; 4] = [0.0, 0.1, 0.5, 0.9];
const NGD_ETAS: [f64; 3] = [0.01, 0.1, 0.25];
const SD_ETAS: [f64; 4] = [0.01, 0.05, 0.1, 0.25];
const PRIMAL_BETAS: [f64; 2] = [0.1, 0.5];
const ADAGRAD_ETAS: (f64, f64) = (0.05, 0.5);
/// Steps in the window over which AdaGrad's diagonal must have settled.
const ADAGRAD_WINDOW: usize = 1000;
/// Largest diagonal change over one window for the diagonal to count as settled.
pub const ADAGRAD_SETTLE: f64 = 1e-8;

const fn defaults(seed: u64, budget: usize, cadence: usize) -> Defaults {
    Defaults {
        seed,
        eta: None,
        beta: None,
        gamma: None,
        budget,
        tol: None,
        cadence,
    }
}

const fn plan(oracle: &'static str, metric: Metric, tolerance: f64) -> VerificationPlan {
    VerificationPlan {
        oracle,
        metric,
        tolerance,
    }
}

pub(super) static REGISTRY: &[ExperimentSpec] = &[
    ExperimentSpec {
        id: "E1",
        summary: "GD, heavy-ball/Nesterov momentum and SGD on squared loss reach the l2 projection of the initialization",
        dataset: "random 3x10 realizable regression",
        loss: Loss::Squared,
        algorithm: "gd | momentum | minibatch gd",
        counterexample: false,
        plan: plan("l2 Bregman projection", Metric::LimitPoint, 1e-6),
        defaults: Defaults { eta: Some(0.01), beta: Some(0.5), gamma: Some(0.5), tol: Some(1e-24), ..defaults(0, 100_000, 10) },
        runner: e1,
    },
    ExperimentSpec {
        id: "E2",
        summary: "entropy mirror descent, with or without dual momentum, reaches the entropy projection",
        dataset: "example1",
        loss: Loss::Squared,
        algorithm: "mirror descent (entropy) | dual momentum",
        counterexample: false,
        plan: plan("entropy Bregman projection", Metric::LimitPoint, 1e-6),
        defaults: Defaults { eta: Some(0.05), beta: Some(0.5), gamma: Some(0.0), tol: Some(1e-24), ..defaults(0, 100_000, 10) },
        runner: e2,
    },
    ExperimentSpec {
        id: "E2-primal",
        summary: "one step of primal momentum in mirror descent shifts the limit off the entropy projection",
        dataset: "example1",
        loss: Loss::Squared,
        algorithm: "mirror descent (entropy) with primal momentum",
        counterexample: true,
        plan: plan("entropy KKT residual", Metric::LimitPoint, 1e-6),
        defaults: Defaults { eta: Some(0.12), beta: Some(0.1), tol: Some(1e-24), ..defaults(0, 100_000, 10) },
        runner: e2_primal,
    },
    ExperimentSpec {
        id: "E3",
        summary: "exponentiated gradient on the simplex reaches the maximum-entropy solution",
        dataset: "symmetric 3-simplex case and random simplex regression",
        loss: Loss::Squared,
        algorithm: "simplex-constrained mirror descent (entropy)",
        counterexample: false,
        plan: plan("entropy projection with simplex constraint", Metric::LimitPoint, 1e-6),
        defaults: Defaults { eta: Some(0.1), tol: Some(1e-24), ..defaults(0, 100_000, 10) },
        runner: e3,
    },
    ExperimentSpec {
        id: "E4",
        summary: "natural gradient descent limits depend on the step size; one finite step leaves the data manifold",
        dataset: "example2",
        loss: Loss::Squared,
        algorithm: "natural gradient (entropy) sweep + hybrid flow",
        counterexample: true,
        plan: plan("pairwise limit gaps and off-manifold witness", Metric::LimitPoint, 1e-6),
        defaults: Defaults { eta: Some(0.1), tol: Some(1e-24), ..defaults(0, 100_000, 10) },
        runner: e4,
    },
    ExperimentSpec {
        id: "E5",
        summary: "l4/3 steepest descent limits depend on the step size and the flow misses the min-norm solution",
        dataset: "example3",
        loss: Loss::Squared,
        algorithm: "steepest descent (l4/3) sweep + flow",
        counterexample: true,
        plan: plan("squared-l4/3 min-norm projection", Metric::LimitPoint, 1e-6),
        defaults: Defaults { eta: Some(0.1), tol: Some(1e-24), ..defaults(0, 100_000, 10) },
        runner: e5,
    },
    ExperimentSpec {
        id: "E6",
        summary: "steepest descent on exponential loss converges in direction to the max-margin separator of its norm",
        dataset: "random separable 8x2 classification",
        loss: Loss::Exponential,
        algorithm: "steepest descent (l4/3, l3/2, l2, l3), loss-adaptive steps",
        counterexample: false,
        plan: plan("max-margin certificate", Metric::LimitDirection, 1e-2),
        defaults: Defaults { tol: Some(1e-5), ..defaults(0, 1_000_000, 100) },
        runner: e6,
    },
    ExperimentSpec {
        id: "E7",
        summary: "coordinate descent (AdaBoost) on exponential loss reaches the l1 max margin",
        dataset: "random separable 8x2 classification",
        loss: Loss::Exponential,
        algorithm: "coordinate descent, average tie rule, loss-adaptive steps",
        counterexample: false,
        plan: plan("l1 max-margin certificate", Metric::LimitDirection, 1e-2),
        defaults: Defaults { tol: Some(1e-3), ..defaults(0, 1_000_000, 100) },
        runner: e7,
    },
    ExperimentSpec {
        id: "E8",
        summary: "factorized GD on exponential loss approaches a first-order stationary point of nuclear max margin",
        dataset: "random psd-separable 6-example matrix data",
        loss: Loss::Exponential,
        algorithm: "gradient descent on U with W = UU^T",
        counterexample: false,
        plan: plan("nuclear-norm stationarity certificate", Metric::LimitDirection, 1e-2),
        defaults: defaults(0, 1_000_000, 1000),
        runner: e8,
    },
    ExperimentSpec {
        id: "E9",
        summary: "the normalized negative gradient converges into the cone of the support vectors",
        dataset: "random separable 8x2 classification",
        loss: Loss::Exponential,
        algorithm: "steepest descent (l4/3, l3/2, l2, l3), loss-adaptive steps",
        counterexample: false,
        plan: plan("nonnegative least squares on the support cone", Metric::LimitDirection, 1e-3),
        defaults: Defaults { tol: Some(1e-5), ..defaults(0, 1_000_000, 1000) },
        runner: e9,
    },
    ExperimentSpec {
        id: "E10",
        summary: "AdaGrad's diagonal settles, yet its limit direction depends on the step size",
        dataset: "random separable 3x2 classification",
        loss: Loss::Exponential,
        algorithm: "diagonal AdaGrad at two step sizes",
        counterexample: true,
        plan: plan("direction gap between step sizes", Metric::LimitDirection, 1e-2),
        defaults: Defaults { tol: Some(ADAGRAD_SETTLE), ..defaults(1, 300_000_000, 100_000) },
        runner: e10,
    },
];

pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream)
}

fn loss_stop(ctx: &Context) -> StopRule {
    StopRule::LossBelow { tol: ctx.tol() }
}

fn witness(w: &DVector<f64>) -> f64 {
    2.0 * w[0].ln() - w[1].ln()
}

fn add_pairwise(b: &mut ReportBuilder, limits: &[(String, DVector<f64>)], threshold: f64) {
    for i in 0..limits.len() {
        for j in i + 1..limits.len() {
            let d = (&limits[i].1 - &limits[j].1).norm();
            b.check(Check::above(
                format!("limit gap {} vs {}", limits[i].0, limits[j].0),
                d,
                threshold,
            ));
        }
    }
}

fn trajectory_rows(fig: &mut Figure, label: &str, prefix: &[f64], snapshots: &[Snapshot]) {
    for s in snapshots {
        let mut row = prefix.to_vec();
        row.push(s.t as f64);
        row.extend(s.w.iter());
        fig.rows.push((label.to_string(), row));
    }
}

fn finish(ctx: &Context, b: ReportBuilder, series: Vec<Series>, figures: Vec<Figure>) -> Outcome {
    Ok(ExperimentOutput {
        report: b.finish(ctx),
        series,
        figures,
    })
}

fn e1(ctx: &Context) -> Outcome {
    let seed = ctx.seed();
    let ds = realizable_regression(3, 10, seed)?;
    let w0 = gaussian_vector(&mut rng(sub_seed(seed, 1)), 10);
    let oracle = bregman_projection(&Potential::SquaredEuclidean, &ds, &w0)?;
    let prob = Problem::new(&ds, Loss::Squared);
    let base = OptimizerConfig::constant(ctx.eta(), ctx.budget())
        .with_stop(loss_stop(ctx))
        .with_cadence(ctx.cadence());
    let variants = [
        ("gd", Algorithm::Gd, base.clone()),
        (
            "momentum",
            Algorithm::Momentum,
            base.clone().with_momentum(
                Schedule::Constant(ctx.beta()),
                Schedule::Constant(ctx.gamma()),
            ),
        ),
        (
            "minibatch",
            Algorithm::Gd,
            base.with_batch(BatchSchedule::Minibatch { size: 1, seed }),
        ),
    ];
    let mut b = ReportBuilder::default();
    let mut series = Vec::new();
    for (name, alg, cfg) in variants {
        let tr = run(&alg, &prob, w0.clone(), &cfg, &mut |_| true)?;
        let d = (tr.final_w() - &oracle.w_star).norm();
        b.check(Check::below(
            format!("{name}: distance to l2 projection"),
            d,
            ctx.spec.plan.tolerance,
        ));
        b.metric(format!("{name}.iterations"), tr.iterations as f64);
        b.metric(format!("{name}.log_loss"), tr.final_log_loss());
        b.iterations(tr.iterations);
        series.push(Series::from_snapshots(name, &tr.snapshots));
    }
    series.push(Series::single("oracle", 0, &oracle.w_star, f64::NAN));
    finish(ctx, b, series, vec![])
}

/// Runs `alg` and tracks the largest distance of `z_t − z_0` from the data span.
fn run_with_manifold(
    alg: &Algorithm,
    prob: &Problem,
    w0: DVector<f64>,
    cfg: &OptimizerConfig,
) -> std::result::Result<(Trajectory, f64), ExperimentFailure> {
    let potential = alg.potential().expect("mirror algorithm").clone();
    let span = prob.dataset.span();
    let z0 = potential.grad(&w0)?;
    let mut worst = 0.0f64;
    let tr = run(alg, prob, w0, cfg, &mut |info| {
        if let Some(z) = &info.after.z {
            worst = worst.max(manifold_residual(&span, z, &z0));
        }
        true
    })?;
    Ok((tr, worst))
}

fn e2(ctx: &Context) -> Outcome {
    let ds = example1();
    let prob = Problem::new(&ds, Loss::Squared);
    let entropy = Potential::Entropy;
    let w0 = entropy.minimizer(2);
    let oracle = bregman_projection(&entropy, &ds, &w0)?;
    let tol = ctx.spec.plan.tolerance;
    let mut b = ReportBuilder::default();
    b.metric(
        "oracle.error_vs_analytic",
        (&oracle.w_star - DVector::from_vec(vec![0.5, 0.25])).norm(),
    );
    let base = OptimizerConfig::constant(ctx.eta(), ctx.budget())
        .with_stop(loss_stop(ctx))
        .with_cadence(ctx.cadence());
    let runs = [
        (
            "md",
            Algorithm::Mirror {
                potential: entropy.clone(),
            },
            base.clone(),
        ),
        (
            "dual-momentum",
            Algorithm::MirrorDualMomentum {
                potential: entropy.clone(),
            },
            base.with_momentum(
                Schedule::Constant(ctx.beta()),
                Schedule::Constant(ctx.gamma()),
            ),
        ),
    ];
    let mut series = Vec::new();
    for (name, alg, cfg) in runs {
        let (tr, manifold) = run_with_manifold(&alg, &prob, w0.clone(), &cfg)?;
        b.check(Check::below(
            format!("{name}: distance to entropy projection"),
            (tr.final_w() - &oracle.w_star).norm(),
            tol,
        ));
        b.check(Check::below(
            format!("{name}: dual manifold residual"),
            manifold,
            1e-9,
        ));
        b.iterations(tr.iterations);
        series.push(Series::from_snapshots(name, &tr.snapshots));
    }
    series.push(Series::single("oracle", 0, &oracle.w_star, f64::NAN));
    finish(ctx, b, series, vec![])
}

/// Outcome of entropy mirror descent on `example1` with primal momentum
/// `β₁` applied at the second step only.
#[derive(Clone, Debug)]
pub struct PrimalMomentumRun {
    pub limit: DVector<f64>,
    pub feasibility: f64,
    pub stationarity: f64,
    /// `2 log w∞[0] − log w∞[1]`; zero on the data manifold through `[1, 1]`.
    pub witness: f64,
    /// The witness of the momentum anchor `(1+β₁)W₁ − β₁W₀`.
    pub predicted: f64,
    pub trajectory: Trajectory,
}

pub fn primal_momentum_offsets(
    beta1: f64,
    eta: f64,
    budget: usize,
    loss_tol: f64,
    cadence: usize,
) -> Result<PrimalMomentumRun> {
    let ds = example1();
    let prob = Problem::new(&ds, Loss::Squared);
    let w0 = DVector::from_vec(vec![1.0, 1.0]);
    let alg = Algorithm::MirrorPrimalMomentum {
        potential: Potential::Entropy,
    };
    let cfg = OptimizerConfig::constant(eta, budget)
        .with_momentum(Schedule::PerStep(vec![0.0, beta1]), Schedule::Constant(0.0))
        .with_stop(StopRule::LossBelow { tol: loss_tol })
        .with_cadence(cadence);
    let mut w1 = None;
    let tr = run(&alg, &prob, w0.clone(), &cfg, &mut |info| {
        if info.after.t == 1 {
            w1 = Some(info.after.w.clone());
        }
        true
    })?;
    let w1 = w1.ok_or_else(|| Error::InvalidConfig("run stopped before its second step".into()))?;
    let anchor = &w1 * (1.0 + beta1) - &w0 * beta1;
    let limit = tr.final_w().clone();
    let (stationarity, _) = kkt_residual(&Potential::Entropy, &ds, &w0, &limit)?;
    Ok(PrimalMomentumRun {
        feasibility: ds.max_violation(&limit)?,
        stationarity,
        witness: witness(&limit),
        predicted: witness(&anchor),
        limit,
        trajectory: tr,
    })
}

fn e2_primal(ctx: &Context) -> Outcome {
    let betas: Vec<f64> = match ctx.config.overrides.beta {
        Some(b) => vec![b],
        None => PRIMAL_BETAS.to_vec(),
    };
    let mut b = ReportBuilder::default();
    let mut series = Vec::new();
    for beta1 in betas {
        let r = primal_momentum_offsets(beta1, ctx.eta(), ctx.budget(), ctx.tol(), ctx.cadence())?;
        let tag = format!("beta1={beta1}");
        b.check(Check::below(
            format!("{tag}: feasibility"),
            r.feasibility,
            1e-8,
        ));
        b.check(Check::above(
            format!("{tag}: entropy KKT stationarity residual"),
            r.stationarity,
            1e-2,
        ));
        b.check(Check::below(
            format!("{tag}: witness vs momentum anchor"),
            (r.witness - r.predicted).abs(),
            1e-9,
        ));
        b.metric(format!("{tag}.witness"), r.witness);
        b.metric(
            format!("{tag}.offset_minus_log1p_beta"),
            r.witness - beta1.ln_1p(),
        );
        b.iterations(r.trajectory.iterations);
        series.push(Series::from_snapshots(tag, &r.trajectory.snapshots));
    }

    let ds = example1();
    let prob = Problem::new(&ds, Loss::Squared);
    let alg = Algorithm::MirrorPrimalMomentum {
        potential: Potential::Entropy,
    };
    let mut fig = Figure {
        name: "fig1a".into(),
        columns: cols(&["beta", "gamma", "t", "w0", "w1"]),
        rows: vec![],
    };
    let mut feasible = true;
    let mut limits: Vec<DVector<f64>> = Vec::new();
    for &beta in &SWEEP_BETA_GAMMA {
        for &gamma in &SWEEP_BETA_GAMMA {
            let cfg = OptimizerConfig::constant(ctx.eta(), ctx.budget())
                .with_momentum(Schedule::Constant(beta), Schedule::Constant(gamma))
                .with_stop(loss_stop(ctx))
                .with_cadence(ctx.cadence());
            let label = format!("beta={beta},gamma={gamma}");
            match run(
                &alg,
                &prob,
                DVector::from_vec(vec![1.0, 1.0]),
                &cfg,
                &mut |_| true,
            ) {
                Ok(tr) => {
                    b.iterations(tr.iterations);
                    let w = tr.final_w().clone();
                    feasible &= ds.max_violation(&w)? < 1e-8;
                    if limits.iter().all(|l| (l - &w).norm() > 1e-4) {
                        limits.push(w.clone());
                    }
                    b.metric(format!("fig1a.{label}.witness"), witness(&w));
                    trajectory_rows(&mut fig, &label, &[beta, gamma], &tr.snapshots);
                }
                Err(a) => {
                    b.note(format!("fig1a {label}: {}", a.error));
                    b.iterations(a.partial.iterations);
                    fig.rows
                        .push((label, vec![beta, gamma, f64::NAN, f64::NAN, f64::NAN]));
                }
            }
        }
    }
    b.check(Check::holds(
        "fig1a: converged sweep limits are feasible",
        feasible,
    ));
    b.metric("fig1a.distinct_limits", limits.len() as f64);
    finish(ctx, b, series, vec![fig])
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn e3(ctx: &Context) -> Outcome {
    let tol = ctx.spec.plan.tolerance;
    let mut b = ReportBuilder::default();
    let mut series = Vec::new();
    let symmetric = Dataset::from_rows(&[vec![1.0, 0.0, 0.0]], &[0.2], Task::Regression)?;
    let (random, _) = simplex_regression(2, 5, ctx.seed())?;
    for (name, ds, expected) in [
        (
            "symmetric",
            symmetric,
            Some(DVector::from_vec(vec![0.2, 0.4, 0.4])),
        ),
        ("random", random, None),
    ] {
        let d = ds.dim();
        let w0 = DVector::from_element(d, 1.0 / d as f64);
        let constraint = AffineConstraint::simplex(d);
        let g = constraint.matrix(d)?;
        let h = DVector::from_element(1, 1.0);
        let oracle = bregman_projection_with(&Potential::Entropy, &ds, Some((&g, &h)), &w0)?;
        let alg = Algorithm::MirrorConstrained {
            potential: Potential::Entropy,
            constraint,
        };
        let cfg = OptimizerConfig::constant(ctx.eta(), ctx.budget())
            .with_stop(loss_stop(ctx))
            .with_cadence(ctx.cadence());
        let prob = Problem::new(&ds, Loss::Squared);
        let tr = run(&alg, &prob, w0, &cfg, &mut |_| true)?;
        b.check(Check::below(
            format!("{name}: distance to max-entropy solution"),
            (tr.final_w() - &oracle.w_star).norm(),
            tol,
        ));
        b.check(Check::below(
            format!("{name}: simplex violation"),
            (tr.final_w().sum() - 1.0).abs(),
            1e-10,
        ));
        if let Some(e) = expected {
            b.check(Check::below(
                format!("{name}: distance to [0.2, 0.4, 0.4]"),
                (tr.final_w() - e).norm(),
                tol,
            ));
        }
        b.iterations(tr.iterations);
        series.push(Series::from_snapshots(name, &tr.snapshots));
        series.push(Series::single(
            format!("{name}-oracle"),
            0,
            &oracle.w_star,
            f64::NAN,
        ));
    }
    finish(ctx, b, series, vec![])
}

/// One natural-gradient step of size `eta1` on `example2` from `[1, 1]`:
/// returns `W₁`, its witness `2 log W₁[0] − log W₁[1]` and the closed form
/// `log(1 + η₁²r₀²/(1 + 2η₁r₀))` with `r₀ = −2(⟨W₀, x⟩ − y)`.
pub fn hybrid_witness(eta1: f64) -> Result<(DVector<f64>, f64, f64)> {
    let ds = example1();
    let prob = Problem::new(&ds, Loss::Squared);
    let w0 = DVector::from_vec(vec![1.0, 1.0]);
    let r0 = -2.0 * (ds.predictions(&w0)?[0] - ds.labels()[0]);
    if !(1.0 + 2.0 * eta1 * r0 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "hybrid step {eta1} leaves the positive orthant"
        )));
    }
    let mut state = OptimizerState::new(w0);
    Algorithm::NaturalGradient {
        potential: Potential::Entropy,
    }
    .step(&mut state, &prob, &StepParams::eta(eta1), Fault::None)?;
    let closed = (eta1 * eta1 * r0 * r0 / (1.0 + 2.0 * eta1 * r0)).ln_1p();
    Ok((state.w.clone(), witness(&state.w), closed))
}

fn flow_rows(
    fig: &mut Figure,
    label: &str,
    kind: &FlowKind,
    start: &DVector<f64>,
    prob: &Problem,
    limit: &DVector<f64>,
) -> Result<()> {
    let times: Vec<f64> = (0..=40)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                1e-3 * 10f64.powf(k as f64 / 8.0)
            }
        })
        .collect();
    for p in integrate_flow(kind, start, prob, &times, FlowOptions::default())? {
        let mut row = vec![p.time];
        row.extend(p.w.iter());
        fig.rows.push((label.to_string(), row));
    }
    let mut row = vec![f64::INFINITY];
    row.extend(limit.iter());
    fig.rows.push((label.to_string(), row));
    Ok(())
}

fn e4(ctx: &Context) -> Outcome {
    let ds = example1();
    let prob = Problem::new(&ds, Loss::Squared);
    let w0 = DVector::from_vec(vec![1.0, 1.0]);
    let oracle = bregman_projection(&Potential::Entropy, &ds, &w0)?;
    let alg = Algorithm::NaturalGradient {
        potential: Potential::Entropy,
    };
    let etas: Vec<f64> = if ctx.eta_overridden() {
        vec![ctx.eta()]
    } else {
        NGD_ETAS.to_vec()
    };
    let mut b = ReportBuilder::default();
    let mut series = Vec::new();
    let mut fig = Figure {
        name: "fig1b".into(),
        columns: cols(&["t", "w0", "w1"]),
        rows: vec![],
    };
    let mut limits = Vec::new();
    for eta in etas {
        let cfg = OptimizerConfig::constant(eta, ctx.budget())
            .with_stop(loss_stop(ctx))
            .with_cadence(ctx.cadence())
            .with_safeguard(true);
        let tr = run(&alg, &prob, w0.clone(), &cfg, &mut |_| true)?;
        let tag = format!("eta={eta}");
        let w = tr.final_w().clone();
        b.check(Check::below(
            format!("{tag}: feasibility"),
            ds.max_violation(&w)?,
            1e-8,
        ));
        b.metric(
            format!("{tag}.distance_to_md_limit"),
            (&w - &oracle.w_star).norm(),
        );
        b.metric(format!("{tag}.witness"), witness(&w));
        b.metric(format!("{tag}.halvings"), tr.halvings as f64);
        b.iterations(tr.iterations);
        trajectory_rows(&mut fig, &format!("ngd {tag}"), &[], &tr.snapshots);
        series.push(Series::from_snapshots(tag.clone(), &tr.snapshots));
        limits.push((tag, w));
    }
    add_pairwise(&mut b, &limits, 1e-4);

    let (w1, wit, closed) = hybrid_witness(HYBRID_ETA)?;
    b.check(Check::below(
        "hybrid: witness vs closed form",
        (wit - closed).abs(),
        1e-8,
    ));
    let kind = FlowKind::NaturalGradient(Potential::Entropy);
    let lim = flow_limit(&kind, &w1, &prob, 1e-8, FlowOptions::default())?;
    b.metric("hybrid.flow_witness", witness(&lim.w));
    b.check(Check::below(
        "hybrid: flow limit feasibility",
        ds.max_violation(&lim.w)?,
        1e-6,
    ));
    b.check(Check::above(
        "hybrid: distance to md limit",
        (&lim.w - &oracle.w_star).norm(),
        1e-5,
    ));
    flow_rows(&mut fig, "hybrid flow", &kind, &w1, &prob, &lim.w)?;
    fig.rows.push((
        "md limit".into(),
        vec![f64::INFINITY, oracle.w_star[0], oracle.w_star[1]],
    ));
    series.push(Series::single("hybrid-flow-limit", 0, &lim.w, f64::NAN));
    series.push(Series::single("oracle", 0, &oracle.w_star, f64::NAN));
    finish(ctx, b, series, vec![fig])
}

fn l43() -> Norm {
    Norm::lp(Exponent::ratio(4, 3).expect("valid exponent"))
}

fn e5(ctx: &Context) -> Outcome {
    let ds = example3();
    let prob = Problem::new(&ds, Loss::Squared);
    let norm = l43();
    let w0 = DVector::zeros(3);
    let potential = Potential::squared_lp(Exponent::ratio(4, 3)?)?;
    let oracle = bregman_projection(&potential, &ds, &w0)?;
    let alg = Algorithm::Steepest {
        norm: norm.clone(),
        tie: TieRule::Average,
    };
    let etas: Vec<f64> = if ctx.eta_overridden() {
        vec![ctx.eta()]
    } else {
        SD_ETAS.to_vec()
    };
    let mut b = ReportBuilder::default();
    let mut series = Vec::new();
    let mut fig = Figure {
        name: "fig1c".into(),
        columns: cols(&["t", "w0", "w1", "w2"]),
        rows: vec![],
    };
    let mut limits = Vec::new();
    for eta in etas {
        let cfg = OptimizerConfig::constant(eta, ctx.budget())
            .with_stop(loss_stop(ctx))
            .with_cadence(ctx.cadence())
            .with_safeguard(true);
        let tr = run(&alg, &prob, w0.clone(), &cfg, &mut |_| true)?;
        let tag = format!("eta={eta}");
        let w = tr.final_w().clone();
        b.check(Check::below(
            format!("{tag}: feasibility"),
            ds.max_violation(&w)?,
            1e-8,
        ));
        b.check(Check::above(
            format!("{tag}: distance to min-norm solution"),
            (&w - &oracle.w_star).norm(),
            1e-3,
        ));
        b.metric(format!("{tag}.halvings"), tr.halvings as f64);
        b.iterations(tr.iterations);
        trajectory_rows(&mut fig, &format!("sd {tag}"), &[], &tr.snapshots);
        series.push(Series::from_snapshots(tag.clone(), &tr.snapshots));
        limits.push((tag, w));
    }
    add_pairwise(&mut b, &limits, 1e-4);

    let kind = FlowKind::Steepest(norm);
    let lim = flow_limit(&kind, &w0, &prob, 1e-8, FlowOptions::default())?;
    b.check(Check::below(
        "flow: feasibility",
        ds.max_violation(&lim.w)?,
        1e-6,
    ));
    b.check(Check::above(
        "flow: distance to min-norm solution",
        (&lim.w - &oracle.w_star).norm(),
        1e-3,
    ));
    flow_rows(&mut fig, "flow", &kind, &w0, &prob, &lim.w)?;
    fig.rows.push((
        "min-norm".into(),
        [&[f64::INFINITY][..], oracle.w_star.as_slice()].concat(),
    ));
    series.push(Series::single("flow-limit", 0, &lim.w, f64::NAN));
    series.push(Series::single("oracle", 0, &oracle.w_star, f64::NAN));
    finish(ctx, b, series, vec![fig])
}

/// The separable datasets shared by the margin experiments: `N = 8`,
/// minimum hidden margin 0.1, `d = 2` for seeds 0–4 and `d = 3` for 5–9.
pub fn margin_datasets() -> Result<Vec<(u64, Dataset)>> {
    (0..10u64)
        .map(|seed| {
            separable_classification(8, if seed < 5 { 2 } else { 3 }, 0.1, seed)
                .map(|ds| (seed, ds))
        })
        .collect()
}

/// Norms exercised by the steepest-descent margin experiments.
pub fn margin_norms() -> Vec<Norm> {
    [(4, 3), (3, 2), (2, 1), (3, 1)]
        .iter()
        .map(|&(n, d)| Norm::lp(Exponent::ratio(n, d).expect("valid exponent")))
        .collect()
}

/// A loss-adaptive steepest-descent run on exponential loss from the origin,
/// with every diagnostic the margin experiments check.
#[derive(Clone, Debug)]
pub struct SdMarginRun {
    pub certificate: MarginCertificate,
    pub final_w: DVector<f64>,
    pub iterations: usize,
    pub margin_gap: f64,
    /// `None` when the certificate is degenerate.
    pub direction_error: Option<f64>,
    pub monotone: MonotoneTracker,
    pub bound: MarginBoundTracker,
    pub square_ratio: f64,
    pub tail_fraction: f64,
    pub cauchy_gap: f64,
    /// `−∇L/‖∇L‖₂` at the final iterate.
    pub neg_grad_direction: DVector<f64>,
    pub snapshots: Vec<Snapshot>,
}

pub fn sd_margin_run(
    ds: &Dataset,
    alg: &Algorithm,
    budget: usize,
    gap_tol: f64,
    cadence: usize,
    fault: Fault,
) -> std::result::Result<SdMarginRun, ExperimentFailure> {
    let norm = alg.step_norm();
    let certificate = max_margin(&norm, ds)?;
    if !certificate.is_separable() {
        return Err(Error::InvalidDataset("data are not linearly separable".into()).into());
    }
    let prob = Problem::new(ds, Loss::Exponential);
    let w0 = DVector::zeros(ds.dim());
    let log_l0 = ds.log_objective(Loss::Exponential, &w0)?;
    let mut cfg = OptimizerConfig::loss_adaptive(1.0, ETA_MAX, budget)
        .with_stop(StopRule::MarginGap {
            gamma: certificate.gamma,
            tol: gap_tol,
            norm: norm.clone(),
        })
        .with_cadence(cadence);
    cfg.fault = fault;
    let mut monotone = MonotoneTracker::default();
    let mut bound = MarginBoundTracker::new(&norm, ds, log_l0);
    let mut squares = SquareSumTracker::new(&norm, log_l0);
    let tr = run(alg, &prob, w0, &cfg, &mut |info| {
        monotone.observe(info);
        bound.observe(info, ds);
        squares.observe(info);
        // A loss increase already fails the run; stop instead of burning the budget.
        monotone.violations == 0
    })?;
    let w = tr.final_w().clone();
    let gap = margin_gap(ds, &w, &certificate)?;
    let direction_error = if certificate.degenerate {
        None
    } else {
        Some(direction_distance(&w, &certificate.w_star, &norm)?)
    };
    let points: Vec<_> = tr.snapshots.iter().skip(1).map(|s| s.w.clone()).collect();
    let cauchy = if points.len() >= 2 {
        cauchy_gap(&points, &norm, CAUCHY_WINDOW)?
    } else {
        f64::NAN
    };
    let g = ds.scaled_gradient(Loss::Exponential, &w, None)?.direction;
    Ok(SdMarginRun {
        certificate,
        iterations: tr.iterations,
        margin_gap: gap,
        direction_error,
        monotone,
        bound,
        square_ratio: squares.worst_ratio,
        tail_fraction: squares.tail_fraction(),
        cauchy_gap: cauchy,
        neg_grad_direction: -&g / g.norm(),
        final_w: w,
        snapshots: tr.snapshots,
    })
}

fn report_sd_run(b: &mut ReportBuilder, tag: &str, r: &SdMarginRun, tol: f64) {
    b.check(Check::below(
        format!("{tag}: normalized margin gap"),
        r.margin_gap,
        tol,
    ));
    match r.direction_error {
        Some(d) => b.check(Check::below(
            format!("{tag}: direction distance to certificate"),
            d,
            2e-2,
        )),
        None => b.note(format!(
            "{tag}: degenerate certificate, direction not compared"
        )),
    }
    b.check(Check::below(
        format!("{tag}: loss increases"),
        r.monotone.violations as f64,
        0.5,
    ));
    b.check(Check::holds(
        format!("{tag}: unnormalized margin lower bound"),
        r.bound.holds(),
    ));
    b.check(Check::below(
        format!("{tag}: square-sum over loss-decrease budget"),
        r.square_ratio,
        1.0 + 1e-9,
    ));
    b.check(Check::below(
        format!("{tag}: square-sum tail share"),
        r.tail_fraction,
        1e-2,
    ));
    b.metric(format!("{tag}.gamma"), r.certificate.gamma);
    b.metric(format!("{tag}.margin_gap"), r.margin_gap);
    b.metric(format!("{tag}.iterations"), r.iterations as f64);
    b.metric(format!("{tag}.cauchy_gap"), r.cauchy_gap);
    b.metric(format!("{tag}.bound_slack"), r.bound.worst_slack);
    b.iterations(r.iterations);
}

fn e6(ctx: &Context) -> Outcome {
    let ds = separable_classification(8, 2, 0.1, ctx.seed())?;
    let mut b = ReportBuilder::default();
    let mut series = Vec::new();
    for norm in margin_norms() {
        let tag = norm.label();
        let alg = Algorithm::Steepest {
            norm,
            tie: TieRule::Average,
        };
        let r = sd_margin_run(
            &ds,
            &alg,
            ctx.budget(),
            ctx.tol(),
            ctx.cadence(),
            ctx.fault(),
        )?;
        report_sd_run(&mut b, &tag, &r, ctx.spec.plan.tolerance);
        series.push(Series::from_snapshots(tag.clone(), &r.snapshots));
        series.push(Series::single(
            format!("{tag}-certificate"),
            0,
            &r.certificate.w_star,
            f64::NAN,
        ));
    }
    finish(ctx, b, series, vec![])
}

fn e7(ctx: &Context) -> Outcome {
    let ds = separable_classification(8, 2, 0.1, ctx.seed())?;
    let alg = Algorithm::Coordinate {
        tie: TieRule::Average,
    };
    let r = sd_margin_run(
        &ds,
        &alg,
        ctx.budget(),
        ctx.tol(),
        ctx.cadence(),
        ctx.fault(),
    )?;
    let mut b = ReportBuilder::default();
    b.check(Check::below(
        "l1: normalized margin gap",
        r.margin_gap,
        ctx.spec.plan.tolerance,
    ));
    b.check(Check::below(
        "l1: loss increases",
        r.monotone.violations as f64,
        0.5,
    ));
    b.metric("l1.gamma", r.certificate.gamma);
    b.metric("l1.margin_gap", r.margin_gap);
    if let Some(d) = r.direction_error {
        b.metric("l1.direction_distance", d);
    } else {
        b.note("degenerate l1 certificate, direction not compared");
    }
    b.iterations(r.iterations);
    let series = vec![
        Series::from_snapshots("coordinate", &r.snapshots),
        Series::single("certificate", 0, &r.certificate.w_star, f64::NAN),
    ];
    finish(ctx, b, series, vec![])
}

/// Factorized exponential-loss run and its certificate diagnostics.
#[derive(Clone, Debug)]
pub struct FactoredMarginRun {
    pub stationarity: f64,
    pub complementary_slackness: f64,
    pub normalized_margin: f64,
    pub nuclear_gamma: f64,
    pub iterations: usize,
    pub final_u: DMatrix<f64>,
}

/// Psd-separable data for seed `seed`: six examples, `d = 2` for even seeds
/// and `d = 3` for odd ones.
pub fn factored_dataset(seed: u64) -> Result<MatrixDataset> {
    psd_separable(6, if seed % 2 == 0 { 2 } else { 3 }, 0.1, seed)
}

pub fn factored_margin_run(
    seed: u64,
    budget: usize,
    cadence: usize,
) -> Result<(FactoredMarginRun, Series)> {
    let ds = factored_dataset(seed)?;
    let d = ds.dim();
    let u0 = gaussian_matrix(&mut rng(sub_seed(seed, 2)), d, d);
    let run = run_factored(
        &ds,
        Loss::Exponential,
        u0,
        FactorStep::LossAdaptive { c: 1.0 },
        budget,
        cadence,
        None,
    )?;
    let u = &run.final_u;
    let w = u * u.transpose();
    let series = Series {
        name: format!("factored seed={seed}"),
        points: run
            .snapshots
            .iter()
            .map(|s| super::SeriesPoint {
                t: s.t,
                w: (&s.u * s.u.transpose()).iter().cloned().collect(),
                log_loss: s.log_loss,
            })
            .collect(),
    };
    Ok((
        FactoredMarginRun {
            stationarity: factored_stationarity_residual(u, &ds, Loss::Exponential)?,
            complementary_slackness: factored_complementary_slackness(u, &ds)?,
            normalized_margin: ds.margins(&w)?.min() / w.trace(),
            nuclear_gamma: nuclear_margin(&ds)?.gamma,
            iterations: run.iterations,
            final_u: run.final_u,
        },
        series,
    ))
}

/// Squared-loss factorized GD from `scale·U₀` at two scales on the same
/// underdetermined matrix regression. Returns the Frobenius gap between the
/// two limits `UUᵀ` and the larger final loss.
pub fn squared_factor_contrast(seed: u64, scales: (f64, f64), budget: usize) -> Result<(f64, f64)> {
    let ds = psd_regression(2, 3, seed)?;
    let u0 = gaussian_matrix(&mut rng(sub_seed(seed, 3)), 3, 3);
    let limit = |scale: f64| -> Result<(DMatrix<f64>, f64)> {
        let r = run_factored(
            &ds,
            Loss::Squared,
            &u0 * scale,
            FactorStep::Constant { eta: 2e-3 },
            budget,
            0,
            Some(1e-24),
        )?;
        Ok((&r.final_u * r.final_u.transpose(), r.final_log_loss.exp()))
    };
    let (a, la) = limit(scales.0)?;
    let (b, lb) = limit(scales.1)?;
    Ok(((a - b).norm(), la.max(lb)))
}

fn e8(ctx: &Context) -> Outcome {
    let seed = ctx.seed();
    let (r, series) = factored_margin_run(seed, ctx.budget(), ctx.cadence())?;
    let mut b = ReportBuilder::default();
    b.check(Check::below(
        "factored stationarity residual",
        r.stationarity,
        ctx.spec.plan.tolerance,
    ));
    b.check(Check::below(
        "complementary slackness violation",
        r.complementary_slackness,
        1e-4,
    ));
    b.metric("normalized_margin", r.normalized_margin);
    b.metric("nuclear_gamma", r.nuclear_gamma);
    b.iterations(r.iterations);
    let (gap, loss) = squared_factor_contrast(seed, (1.0, 0.1), 200_000)?;
    b.check(Check::below("squared contrast: final loss", loss, 1e-12));
    b.check(Check::above(
        "squared contrast: limit gap between init scales 1.0 and 0.1",
        gap,
        1e-3,
    ));
    finish(ctx, b, vec![series], vec![])
}

fn e9(ctx: &Context) -> Outcome {
    let ds = separable_classification(8, 2, 0.1, ctx.seed())?;
    let mut b = ReportBuilder::default();
    let mut series = Vec::new();
    for norm in margin_norms() {
        let tag = norm.label();
        let alg = Algorithm::Steepest {
            norm,
            tie: TieRule::Average,
        };
        let r = sd_margin_run(
            &ds,
            &alg,
            ctx.budget(),
            ctx.tol(),
            ctx.cadence(),
            ctx.fault(),
        )?;
        let res = nonneg_span_residual(&ds, &r.certificate.support, &r.neg_grad_direction)?;
        b.check(Check::below(
            format!("{tag}: support-cone residual"),
            res,
            ctx.spec.plan.tolerance,
        ));
        b.metric(
            format!("{tag}.support_size"),
            r.certificate.support.len() as f64,
        );
        b.iterations(r.iterations);
        series.push(Series::single(
            format!("{tag}-neg-gradient"),
            r.iterations,
            &r.neg_grad_direction,
            f64::NAN,
        ));
    }
    finish(ctx, b, series, vec![])
}

/// AdaGrad runs at two step sizes on the same data and start.
#[derive(Clone, Debug)]
pub struct AdagradDependence {
    /// Whether the diagonal never decreased, per run.
    pub nondecreasing: (bool, bool),
    /// Largest diagonal change over the final window, per run.
    pub final_increment: (f64, f64),
    pub direction_gap: f64,
    /// `Σ_t ‖G_t^{−1/2}∇L(w_t)‖₂²`, per run.
    pub preconditioned_square_sum: (f64, f64),
    pub iterations: usize,
    pub iterations_each: (usize, usize),
    pub finals: (DVector<f64>, DVector<f64>),
    pub snapshots: (Vec<Snapshot>, Vec<Snapshot>),
}

/// Runs AdaGrad at two step sizes under one stopping rule: stop at the first
/// window boundary where the diagonal moved by less than `settle` over the
/// preceding window, or at `budget`.
pub fn adagrad_dependence(
    seed: u64,
    etas: (f64, f64),
    budget: usize,
    settle: f64,
    cadence: usize,
) -> std::result::Result<AdagradDependence, ExperimentFailure> {
    let ds = separable_classification(3, 2, 0.1, seed)?;
    let prob = Problem::new(&ds, Loss::Exponential);
    let alg = Algorithm::Adagrad {
        options: AdagradOptions::default(),
    };
    let one = |eta: f64| -> std::result::Result<(Trajectory, bool, f64, f64), ExperimentFailure> {
        let cfg = OptimizerConfig::constant(eta, budget).with_cadence(cadence);
        let mut mono = true;
        let mut at_window: Option<DVector<f64>> = None;
        let mut increment = f64::NAN;
        let mut squares = 0.0;
        let tr = run(&alg, &prob, DVector::zeros(2), &cfg, &mut |info| {
            let after = info.after.accumulator.as_ref().expect("adagrad diagonal");
            if let Some(before) = &info.before.accumulator {
                mono &= after.iter().zip(before.iter()).all(|(a, b)| a >= b);
            }
            let g = info.grad.to_raw();
            squares += g
                .iter()
                .zip(after.iter())
                .map(|(gi, ai)| gi * gi / ai)
                .sum::<f64>();
            let t = info.after.t;
            if t % ADAGRAD_WINDOW == 0 || t == budget {
                if let Some(prev) = &at_window {
                    increment = (after - prev).amax();
                }
                at_window = Some(after.clone());
                return !(increment < settle);
            }
            true
        })?;
        Ok((tr, mono, increment, squares))
    };
    let (ta, ma, ia, sa) = one(etas.0)?;
    let (tb, mb, ib, sb) = one(etas.1)?;
    let (fa, fb) = (ta.final_w().clone(), tb.final_w().clone());
    Ok(AdagradDependence {
        nondecreasing: (ma, mb),
        final_increment: (ia, ib),
        direction_gap: direction_distance(&fa, &fb, &Norm::l2())?,
        preconditioned_square_sum: (sa, sb),
        iterations: ta.iterations + tb.iterations,
        iterations_each: (ta.iterations, tb.iterations),
        finals: (fa, fb),
        snapshots: (ta.snapshots, tb.snapshots),
    })
}

fn e10(ctx: &Context) -> Outcome {
    let r = adagrad_dependence(
        ctx.seed(),
        ADAGRAD_ETAS,
        ctx.budget(),
        ctx.tol(),
        ctx.cadence(),
    )?;
    let (ea, eb) = ADAGRAD_ETAS;
    let mut b = ReportBuilder::default();
    b.check(Check::holds(
        format!("eta={ea}: diagonal nondecreasing"),
        r.nondecreasing.0,
    ));
    b.check(Check::holds(
        format!("eta={eb}: diagonal nondecreasing"),
        r.nondecreasing.1,
    ));
    b.check(Check::below(
        format!("eta={ea}: final-window diagonal increment"),
        r.final_increment.0,
        ADAGRAD_SETTLE,
    ));
    b.check(Check::below(
        format!("eta={eb}: final-window diagonal increment"),
        r.final_increment.1,
        ADAGRAD_SETTLE,
    ));
    b.check(Check::above(
        "direction gap between step sizes",
        r.direction_gap,
        1e-2,
    ));
    b.metric(format!("eta={ea}.iterations"), r.iterations_each.0 as f64);
    b.metric(format!("eta={eb}.iterations"), r.iterations_each.1 as f64);
    b.metric(
        format!("eta={ea}.preconditioned_square_sum"),
        r.preconditioned_square_sum.0,
    );
    b.metric(
        format!("eta={eb}.preconditioned_square_sum"),
        r.preconditioned_square_sum.1,
    );
    b.iterations(r.iterations);
    let series = vec![
        Series::from_snapshots(format!("eta={ea}"), &r.snapshots.0),
        Series::from_snapshots(format!("eta={eb}"), &r.snapshots.1),
    ];
    finish(ctx, b, series, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_step_matches_closed_form() {
        let (w1, wit, closed) = hybrid_witness(0.1).unwrap();
        assert!((w1[0] - 0.6).abs() < 1e-15 && (w1[1] - 0.2).abs() < 1e-15);
        assert!((closed - 1.8f64.ln()).abs() < 1e-15);
        assert!((wit - closed).abs() < 1e-12);
        assert!(hybrid_witness(0.2).is_err());
    }

    #[test]
    fn primal_momentum_offset_is_the_anchor_witness() {
        let r = primal_momentum_offsets(0.1, 0.12, 100_000, 1e-24, 0).unwrap();
        assert!(r.feasibility < 1e-8);
        assert!((r.witness - r.predicted).abs() < 1e-9);
        assert!(r.stationarity > 1e-2);
    }

    #[test]
    fn margin_datasets_are_separable() {
        let sets = margin_datasets().unwrap();
        assert_eq!(sets.len(), 10);
        for (_, ds) in &sets {
            assert!(max_margin(&Norm::l2(), ds).unwrap().is_separable());
        }
    }
}
