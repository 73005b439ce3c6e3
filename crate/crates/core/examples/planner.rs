//! Steering between points under the costs J, I and the small-system length.

use nonholo::harness;
use nonholo::planner::{CostKind, Planner, SteerOptions};

fn main() -> nonholo::Result<()> {
    let h = harness::system("heisenberg")?;
    let planner = Planner::new(&h);
    let opts = SteerOptions::new(CostKind::SR).tmax(1.0);
    for q in [[0.2, 0.0, 0.0], [0.0, 0.0, 0.01], [0.0, 0.0, 0.04]] {
        let d = planner.sr_distance(&[0.0; 3], &q, &opts)?;
        // vertical points cost 2√(π z); sixteen constant pieces trace a regular
        // 16-gon, which needs 0.65% more
        println!("d_SR(0, {q:?}) = {d:.5}");
    }

    let sys = harness::system("heisenberg_drift")?;
    let planner = Planner::new(&sys);
    let target = [0.05, 0.1, 0.02];
    for cost in [CostKind::J, CostKind::I] {
        let plan = planner.steer(&[0.0; 3], &target, &SteerOptions::new(cost).tmax(0.25).seed(3))?;
        println!(
            "{cost}: cost {:.5} (J {:.5}, I {:.5}), horizon {:.4}, residual {:.1e}, converged {}",
            plan.cost(),
            plan.cost_j,
            plan.cost_i,
            plan.control.horizon,
            plan.residual,
            plan.converged
        );
    }
    // the drift is ∂z, so the null control reaches (0, 0, 0.1) at time 0.1
    let (vj, vi) = planner.value_pair(&[0.0; 3], &[0.0, 0.0, 0.1], &SteerOptions::new(CostKind::J).tmax(0.25))?;
    println!("along the drift for time 0.1: V_J {vj:.2e}, V_I {vi:.5}");
    Ok(())
}
