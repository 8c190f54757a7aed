//! `iblab`: list, run, sweep and verify the registered experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use rayon::prelude::*;

use iblab::harness::acceptance::{run_suite, select};
use iblab::harness::output::{trajectory_csv, update_index, write_run};
use iblab::harness::{
    registry, run_experiment, ExperimentFailure, ExperimentOutput, Overrides, RunConfig, Verdict,
};
use iblab::optimizers::Fault;

/// Exit code for configuration errors (`EX_USAGE`).
const EXIT_CONFIG: u8 = 64;
const EXIT_ERROR: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const DEFAULT_OUT: &str = "iblab-out";

/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser, Debug)]
#[command(
    name = "iblab",
    version,
    about = "Run optimizer implicit-bias experiments and verify them against oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the registered experiments.
    List,
    /// Run one experiment and write its report bundle.
    Run {
        /// Experiment id, e.g. E6. Optional when --config names one.
        experiment: Option<String>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Run several experiments, optionally over a range of seeds, in parallel.
    Sweep {
        /// Experiment ids; all registered experiments when empty.
        experiments: Vec<String>,
        /// Comma-separated experiment ids, merged with the positional ones.
        #[arg(long)]
        filter: Option<String>,
        /// Seeds as `a..b` (half-open) or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Run the acceptance suite; exits nonzero iff any criterion fails.
    VerifyAll {
        /// Criterion numbers or experiment ids, comma-separated.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, hide = true, value_parser = parse_fault, default_value = "none")]
        fault: Fault,
    },
}

#[derive(Args, Debug, Clone)]
struct Knobs {
    /// JSON run config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: iblab-out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Record every N-th iterate in the trajectory.
    #[arg(long)]
    cadence: Option<usize>,
    #[arg(long, hide = true, value_parser = parse_fault)]
    fault: Option<Fault>,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown fault `{s}`"))
}

/// A failure with the exit code it maps to.
struct Exit(u8, String);

impl Exit {
    fn config(msg: impl ToString) -> Self {
        Exit(EXIT_CONFIG, msg.to_string())
    }
}

impl Knobs {
    /// Layers the flags over `--config` (if any) for `experiment`.
    fn config_for(&self, experiment: Option<&str>) -> Result<RunConfig, Exit> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Exit::config(format!("{}: {e}", path.display())))?;
                RunConfig::from_json(&text)
                    .map_err(|e| Exit::config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::new(experiment.ok_or_else(|| Exit::config("no experiment given"))?),
        };
        if let Some(id) = experiment {
            cfg.experiment = id.to_string();
        }
        let o = &mut cfg.overrides;
        let flags = Overrides {
            eta: self.eta,
            beta: self.beta,
            gamma: self.gamma,
            budget: self.budget,
            tol: self.tol,
        };
        o.eta = flags.eta.or(o.eta);
        o.beta = flags.beta.or(o.beta);
        o.gamma = flags.gamma.or(o.gamma);
        o.budget = flags.budget.or(o.budget);
        o.tol = flags.tol.or(o.tol);
        cfg.seed = self.seed.or(cfg.seed);
        cfg.cadence = self.cadence.or(cfg.cadence);
        cfg.out = self.out.clone().or(cfg.out);
        if let Some(f) = self.fault {
            cfg.fault = f;
        }
        cfg.validate().map_err(Exit::config)?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Confirmed | Verdict::RefutedAsExpected => 0,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn verdict_name(v: Verdict) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn print_report(out: &ExperimentOutput) {
    let r = &out.report;
    say!(
        "{}: {} ({} iterations)",
        r.experiment,
        verdict_name(r.verdict),
        r.iterations
    );
    for c in &r.checks {
        let rel = match c.relation {
            iblab::harness::Relation::Below => "<",
            iblab::harness::Relation::Above => ">",
        };
        say!(
            "  [{}] {} = {:.3e} ({rel} {:.1e})",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    for n in &r.notes {
        say!("  note: {n}");
    }
}

/// Writes whatever the aborted run produced next to where the bundle would go.
fn write_partial(dir: &Path, id: &str, failure: &ExperimentFailure) -> Option<PathBuf> {
    if failure.partial.is_empty() {
        return None;
    }
    let path = dir.join(id).join("partial_trajectory.csv");
    std::fs::create_dir_all(path.parent()?).ok()?;
    std::fs::write(&path, trajectory_csv(&failure.partial)).ok()?;
    Some(path)
}

fn cmd_list() -> Result<u8, Exit> {
    for spec in registry() {
        let kind = if spec.counterexample {
            "counterexample"
        } else {
            "confirmation"
        };
        say!("{:<10} {:<14} {}", spec.id, kind, spec.summary);
    }
    Ok(0)
}

fn cmd_run(experiment: Option<String>, knobs: &Knobs) -> Result<u8, Exit> {
    let cfg = knobs.config_for(experiment.as_deref())?;
    let dir = out_dir(&cfg);
    match run_experiment(&cfg) {
        Ok(out) => {
            print_report(&out);
            let entry = write_run(&dir, &out).map_err(|e| Exit(EXIT_ERROR, e.to_string()))?;
            update_index(&dir, vec![entry.clone()]).map_err(|e| Exit(EXIT_ERROR, e.to_string()))?;
            say!("wrote {}", dir.join(&entry.report).display());
            Ok(verdict_code(out.report.verdict))
        }
        Err(f) => {
            if let Some(p) = write_partial(&dir, &cfg.experiment, &f) {
                eprintln!("partial trajectory written to {}", p.display());
            }
            Err(Exit(EXIT_ERROR, format!("{}: {}", cfg.experiment, f.error)))
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Exit> {
    let bad = || {
        Exit::config(format!(
            "bad --seeds `{s}`: expected `a..b` or a comma-separated list"
        ))
    };
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect()
}

fn cmd_sweep(
    experiments: Vec<String>,
    filter: Option<String>,
    seeds: Option<String>,
    knobs: &Knobs,
) -> Result<u8, Exit> {
    let mut ids = experiments;
    ids.extend(
        filter
            .iter()
            .flat_map(|f| f.split(','))
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty()),
    );
    if ids.is_empty() {
        ids = registry().iter().map(|s| s.id.to_string()).collect();
    }
    let seeds: Vec<Option<u64>> = match &seeds {
        Some(s) => parse_seeds(s)?.into_iter().map(Some).collect(),
        None => vec![knobs.seed],
    };
    let mut jobs = Vec::new();
    for seed in &seeds {
        for id in &ids {
            let mut cfg = knobs.config_for(Some(id))?;
            cfg.seed = seed.or(cfg.seed);
            cfg.validate().map_err(Exit::config)?;
            jobs.push(cfg);
        }
    }
    let base = knobs
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let per_seed_dirs = seeds.len() > 1;
    let results: Vec<_> = jobs
        .par_iter()
        .map(|cfg| (cfg, run_experiment(cfg)))
        .collect();
    let (mut errored, mut inconclusive) = (false, false);
    let mut entries: std::collections::BTreeMap<PathBuf, Vec<_>> = Default::default();
    for (cfg, res) in results {
        let dir = match (per_seed_dirs, cfg.seed) {
            (true, Some(s)) => base.join(format!("seed-{s}")),
            _ => base.clone(),
        };
        match res {
            Ok(out) => {
                print_report(&out);
                let entry = write_run(&dir, &out).map_err(|e| Exit(EXIT_ERROR, e.to_string()))?;
                entries.entry(dir).or_default().push(entry);
                inconclusive |= out.report.verdict == Verdict::Inconclusive;
            }
            Err(f) => {
                eprintln!("{}: error: {}", cfg.experiment, f.error);
                write_partial(&dir, &cfg.experiment, &f);
                errored = true;
            }
        }
    }
    for (dir, list) in entries {
        update_index(&dir, list).map_err(|e| Exit(EXIT_ERROR, e.to_string()))?;
        say!("wrote {}", dir.join("index.json").display());
    }
    // An execution error outranks an inconclusive verdict.
    Ok(if errored {
        EXIT_ERROR
    } else if inconclusive {
        EXIT_INCONCLUSIVE
    } else {
        0
    })
}

fn cmd_verify_all(filter: Option<String>, fault: Fault) -> Result<u8, Exit> {
    let selected = select(filter.as_deref());
    if selected.is_empty() {
        return Err(Exit::config(format!(
            "no criterion matches `{}`",
            filter.unwrap_or_default()
        )));
    }
    let results = run_suite(&selected, fault, |r| say!("{}", r.line()));
    let failed = results.iter().filter(|r| !r.passed).count();
    say!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    Ok(if failed == 0 { 0 } else { EXIT_ERROR })
}

fn configure_threads() -> Result<(), Exit> {
    let Ok(v) = std::env::var("IBLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Exit::config(format!(
            "IBLAB_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Exit(EXIT_ERROR, e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::List => cmd_list(),
        Command::Run { experiment, knobs } => cmd_run(experiment, &knobs),
        Command::Sweep {
            experiments,
            filter,
            seeds,
            knobs,
        } => cmd_sweep(experiments, filter, seeds, &knobs),
        Command::VerifyAll { filter, fault } => cmd_verify_all(filter, fault),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
