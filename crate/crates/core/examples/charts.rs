//! Privileged coordinates, weighted boxes and the drift-adapted sets.

use nonholo::charts::{build_chart, build_drift_chart, dilate, pi_contains, xi_contains, DriftBoxSpec};
use nonholo::harness;
use nonholo::structure::DEFAULT_RANK_TOL;

fn main() -> nonholo::Result<()> {
    let h = harness::system("heisenberg")?;
    let chart = build_chart(&h, &[0.0; 3], None, DEFAULT_RANK_TOL)?;
    println!("weights {:?}", chart.weights);
    for z in [[0.1, 0.0, 0.0], [0.0, 0.0, 0.01], [0.05, -0.05, 0.002]] {
        let p = chart.from_coords(&z)?;
        let back = chart.to_coords(&p)?;
        println!("z {z:?} -> q {p:.6?} -> z {back:.6?}, pseudo-distance {:.4}", chart.pseudo_distance(&p)?);
    }
    println!("dilation by 2 of (1, 1, 1): {:?}", dilate(&chart.weights, 2.0, &[1.0, 1.0, 1.0]));

    let moved = chart.rebased(&[0.3, -0.1, 0.2])?;
    println!("rebased chart centred at {:?}", moved.base());

    let d = harness::system("heisenberg_drift")?;
    let dc = build_drift_chart(&d, &[0.0; 3], DEFAULT_RANK_TOL)?;
    println!("drift chart weights {:?}, drift slot {:?}", dc.weights, dc.drift_slot);
    let spec = DriftBoxSpec::from_chart(&dc, 0.1, 0.2)?;
    let slot = dc.drift_slot.unwrap();
    for t in [0.05, 0.2, 0.3] {
        let mut z = vec![0.0; 3];
        z[slot] = t;
        println!("drift time {t}: in Xi {} in Pi {}", xi_contains(&spec, &z), pi_contains(&spec, &z));
    }
    Ok(())
}
