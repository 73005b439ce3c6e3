use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nonholo::ballbox::{ballbox_report, BallBoxOptions};
use nonholo::charts::{build_chart, build_drift_chart};
use nonholo::complexity::{geometric_sweep, ComplexityKind};
use nonholo::harness::{self, Mode};
use nonholo::planner::{CostKind, Planner, SteerOptions};
use nonholo::structure::{drift_order, equiregular_check, flag_at, quasi_random_sample, DEFAULT_RANK_TOL};
use nonholo::{ControlAffineSystem, Error};

#[derive(Parser)]
#[command(name = "nonholo", version, about = "Motion-planning complexity for control-affine systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flag, weights, drift order and an equiregularity sample.
    Analyze {
        /// Built-in system name or path to a system spec file.
        system: String,
        #[arg(long)]
        at: Option<String>,
    },
    /// Optimal cost between two points.
    Distance {
        system: String,
        q0: String,
        q1: String,
        #[arg(long, default_value = "J")]
        cost: String,
        /// Horizon cap; defaults to the spec file's value or 0.25.
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Empirical ball-box constant.
    Ballbox {
        system: String,
        #[arg(long)]
        at: Option<String>,
        /// Comma-separated radii.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Complexity sweep and exponent fit along a built-in curve.
    Complexity {
        system: String,
        curve: String,
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = "J")]
        cost: String,
        /// Comma-separated radii, largest first.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Runs the acceptance suite and writes the experiment CSV.
    Reproduce {
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Registry contents.
    List,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Unknown { .. } | Error::Parse(_) | Error::Config(_) | Error::DimensionMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

fn point(s: Option<&str>, sys: &ControlAffineSystem) -> Result<Vec<f64>, Failure> {
    match s {
        Some(s) => Ok(harness::parse_point(s, sys.dim())?),
        None => Ok(vec![0.0; sys.dim()]),
    }
}

fn defaults(spec: Option<&harness::SystemSpecFile>, tmax: Option<f64>, seed: Option<u64>) -> (f64, u64) {
    (
        tmax.or(spec.and_then(|s| s.tmax)).unwrap_or(0.25),
        seed.or(spec.and_then(|s| s.seed)).unwrap_or(0),
    )
}

fn radii(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("bad radius `{x}`"))))
        .collect()
}

fn run(cmd: Command) -> Result<bool, Failure> {
    match cmd {
        Command::List => {
            println!("systems:");
            for s in harness::SYSTEMS {
                let sys = harness::system(s)?;
                println!(
                    "  {s:<28} dim {}, {} controls{}",
                    sys.dim(),
                    sys.m(),
                    if sys.has_drift() { ", drift" } else { "" }
                );
            }
            println!("curves:");
            for (c, d) in harness::CURVES {
                println!("  {c:<28} {d}");
            }
            println!("complexity kinds: {}", ComplexityKind::ALL.map(|k| k.to_string()).join(", "));
            Ok(true)
        }
        Command::Analyze { system, at } => {
            let (sys, spec) = harness::resolve_system(&system)?;
            let q = point(at.as_deref(), &sys)?;
            let flag = flag_at(&sys.small(), &q, DEFAULT_RANK_TOL)?;
            println!("system {}", sys.label);
            println!("point {q:?}");
            println!("growth vector {}", flag.growth_vector());
            println!("weights {:?}", flag.weights);
            if sys.has_drift() {
                println!("drift order {}", drift_order(&sys, &q, DEFAULT_RANK_TOL)?);
            }
            let bounds = spec.map(|s| s.bounds).unwrap_or_else(|| vec![(-1.0, 1.0); sys.dim()]);
            let cert = equiregular_check(&sys.small(), &quasi_random_sample(&bounds, 64), DEFAULT_RANK_TOL)?;
            match cert.offending {
                None => println!("equiregular on {} sample points", cert.checked),
                Some((p, d)) => println!("not equiregular: growth {d:?} at {p:?}"),
            }
            Ok(true)
        }
        Command::Distance {
            system,
            q0,
            q1,
            cost,
            tmax,
            budget,
            seed,
        } => {
            let (sys, spec) = harness::resolve_system(&system)?;
            let (tmax, seed) = defaults(spec.as_ref(), tmax, seed);
            let (a, b) = (point(Some(&q0), &sys)?, point(Some(&q1), &sys)?);
            let kind: CostKind = cost.parse()?;
            let planner = Planner::new(&sys);
            let opts = SteerOptions::new(kind).tmax(tmax).budget(budget).seed(seed);
            let plan = planner.steer(&a, &b, &opts)?;
            println!("cost {} = {}", kind, plan.cost());
            println!("J {} I {} horizon {}", plan.cost_j, plan.cost_i, plan.control.horizon);
            println!("converged {} residual {:e} evaluations {}", plan.converged, plan.residual, plan.evaluations);
            Ok(plan.converged)
        }
        Command::Ballbox { system, at, sweep, tmax } => {
            let (sys, spec) = harness::resolve_system(&system)?;
            let (tmax, _) = defaults(spec.as_ref(), tmax, None);
            let q = point(at.as_deref(), &sys)?;
            let eps = match (sweep, spec.and_then(|s| s.sweep)) {
                (Some(s), _) => radii(&s)?,
                (None, Some(s)) => s,
                (None, None) => vec![0.4, 0.2, 0.1, 0.05],
            };
            let chart = if sys.has_drift() {
                build_drift_chart(&sys, &q, DEFAULT_RANK_TOL)?
            } else {
                build_chart(&sys, &q, None, DEFAULT_RANK_TOL)?
            };
            let report = ballbox_report(&Planner::new(&sys), &chart, &eps, &BallBoxOptions::new(tmax))?;
            for r in &report.records {
                println!("eps {} outer {:?} inner {:?} samples {}", r.eps, r.c_outer, r.c_inner, r.samples);
            }
            println!("constant {:?} spread {:?}", report.constant, report.spread());
            Ok(report.constant.is_some())
        }
        Command::Complexity {
            system,
            curve,
            kind,
            cost,
            sweep,
            seed,
            tmax,
        } => {
            let (sys, spec) = harness::resolve_system(&system)?;
            let (tmax, seed) = defaults(spec.as_ref(), tmax, seed);
            let c = harness::curve(&curve, &sys)?;
            let kind: ComplexityKind = kind.parse()?;
            let mut cost: CostKind = cost.parse()?;
            if cost == CostKind::J && !sys.has_drift() {
                cost = CostKind::SR;
            }
            let eps = match (sweep, spec.and_then(|s| s.sweep)) {
                (Some(s), _) => radii(&s)?,
                (None, Some(s)) => s,
                (None, None) => geometric_sweep(0.4, 0.1, 5),
            };
            let (results, fit) = harness::complexity_sweep(&sys, &c, kind, cost, &eps, seed, tmax);
            println!("eps,value,pieces,converged");
            for (e, r) in eps.iter().zip(&results) {
                match r {
                    Ok(x) => println!("{e},{},{},{}", x.value, x.pieces, x.converged),
                    Err(err) => println!("{e},,,error: {err}"),
                }
            }
            if let Ok(p) = harness::predict(&sys, kind, &c) {
                println!("predicted exponent {p}");
            }
            match fit {
                Some(f) => println!("fitted slope {:.4} ± {:.4} (r² {:.5})", f.slope, f.half_width, f.r2),
                None => println!("no fit"),
            }
            Ok(results.iter().all(|r| r.is_ok()))
        }
        Command::Reproduce { quick, seed, out } => {
            let mode = if quick { Mode::Quick } else { Mode::Full };
            let rep = harness::reproduce(mode, seed, &mut |line| eprintln!("{line}"))?;
            for c in &rep.checks {
                println!("{c}");
            }
            println!("criterion 13 (determinism) is checked by comparing two runs with the same seed");
            match out {
                Some(p) => std::fs::write(&p, &rep.csv).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?,
                None => print!("{}", rep.csv),
            }
            Ok(rep.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("usage: nonholo <analyze|distance|ballbox|complexity|reproduce|list> ...; see --help");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
