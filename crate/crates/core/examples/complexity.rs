//! Complexity sweeps and exponent fits for a curve and a path.

use nonholo::complexity::{estimate, fit_exponent, geometric_sweep, collect_curve, sweep, ComplexityKind, EstimatorOptions};
use nonholo::harness;
use nonholo::planner::{CostKind, Planner};

fn main() -> nonholo::Result<()> {
    let h = harness::system("heisenberg")?;
    let planner = Planner::new(&h);
    let opts = EstimatorOptions::new(CostKind::SR);
    let vertical = harness::curve("vertical", &h)?;
    let eps = geometric_sweep(0.4, 0.1, 5);
    let results = sweep(&planner, ComplexityKind::Cost, &vertical, &eps, CostKind::SR, &opts);
    for (e, r) in eps.iter().zip(&results) {
        let r = r.as_ref().map_err(Clone::clone)?;
        println!("eps {e:.4}: sigma_cost {:.2} with {} pieces", r.value, r.pieces);
    }
    let fit = fit_exponent(&collect_curve(ComplexityKind::Cost, CostKind::SR, &eps, &results)?)?;
    println!("vertical segment exponent {:.3} ± {:.3}", fit.slope, fit.half_width);

    let d = harness::system("heisenberg_drift")?;
    let planner = Planner::new(&d);
    let path = harness::curve("horizontal-path", &d)?;
    let opts = EstimatorOptions::new(CostKind::J);
    for kind in [ComplexityKind::Time, ComplexityKind::Neig] {
        let e = estimate(&planner, kind, &path, 0.1, CostKind::J, &opts)?;
        println!("drifted horizontal path, {kind} at eps 0.1: {:.2} ({} pieces)", e.value, e.pieces);
    }
    Ok(())
}
