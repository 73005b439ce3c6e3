//! Empirical ball-box constants with and without drift.

use nonholo::ballbox::{ballbox_report, BallBoxOptions};
use nonholo::charts::{build_chart, build_drift_chart};
use nonholo::harness;
use nonholo::planner::Planner;
use nonholo::structure::DEFAULT_RANK_TOL;

fn main() -> nonholo::Result<()> {
    let h = harness::system("heisenberg")?;
    let chart = build_chart(&h, &[0.0; 3], None, DEFAULT_RANK_TOL)?;
    let r = ballbox_report(&Planner::new(&h), &chart, &[0.4, 0.2, 0.1], &BallBoxOptions::new(0.25))?;
    for rec in &r.records {
        println!("eps {:<5} outer C {:?} inner C {:?}", rec.eps, rec.c_outer, rec.c_inner);
    }
    println!("heisenberg: C = {:?}, spread {:?}", r.constant, r.spread());

    let d = harness::system("heisenberg_drift")?;
    let dc = build_drift_chart(&d, &[0.0; 3], DEFAULT_RANK_TOL)?;
    let r = ballbox_report(&Planner::new(&d), &dc, &[0.2, 0.1], &BallBoxOptions::new(0.2))?;
    println!("heisenberg_drift: C = {:?}", r.constant);
    Ok(())
}
