//! Loads a system from a spec file and analyzes it.
//!
//! `cargo run --example spec_file -- examples/unicycle.sys`

use nonholo::harness::SystemSpecFile;
use nonholo::planner::{CostKind, Planner, SteerOptions};
use nonholo::structure::{drift_order, equiregular_check, flag_at, quasi_random_sample, DEFAULT_RANK_TOL};

fn main() -> nonholo::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/unicycle.sys").into());
    let spec = SystemSpecFile::load(&path)?;
    let sys = spec.system()?;
    let q0 = vec![0.0; sys.dim()];
    println!("{}: dim {}, {} controls", spec.name, spec.dim, sys.m());
    println!("growth {}", flag_at(&sys.small(), &q0, DEFAULT_RANK_TOL)?.growth_vector());
    if sys.has_drift() {
        println!("drift order {}", drift_order(&sys, &q0, DEFAULT_RANK_TOL)?);
    }
    let cert = equiregular_check(&sys.small(), &quasi_random_sample(&spec.bounds, 32), DEFAULT_RANK_TOL)?;
    println!("equiregular on {} points: {}", cert.checked, cert.offending.is_none());

    let mut q1 = q0.clone();
    q1[0] = 0.2;
    q1[2] = 0.3;
    let tmax = spec.tmax.unwrap_or(0.25);
    let plan = Planner::new(&sys).steer(&q0, &q1, &SteerOptions::new(CostKind::J).tmax(tmax).seed(spec.seed.unwrap_or(0)))?;
    println!("turn while drifting: J {:.5} converged {}", plan.cost_j, plan.converged);
    Ok(())
}
