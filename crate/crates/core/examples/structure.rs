//! Flags, weights, drift order and tangency degrees of the built-in systems.

use nonholo::harness;
use nonholo::structure::{
    adapted_frame_at, drift_order, equiregular_check, flag_at, quasi_random_sample, tangency_sweep, DEFAULT_RANK_TOL,
};

fn main() -> nonholo::Result<()> {
    for name in harness::SYSTEMS {
        let sys = harness::system(name)?;
        let origin = vec![0.0; sys.dim()];
        let flag = flag_at(&sys.small(), &origin, DEFAULT_RANK_TOL)?;
        print!("{name:<28} growth {} weights {:?}", flag.growth_vector(), flag.weights);
        if sys.has_drift() {
            print!(" drift order {}", drift_order(&sys, &origin, DEFAULT_RANK_TOL)?);
        }
        println!();
    }

    // martinet loses rank on x1 = 0
    let martinet = harness::system("martinet")?;
    let sample = quasi_random_sample(&[(-1.0, 1.0); 3], 32);
    let cert = equiregular_check(&martinet, &sample, DEFAULT_RANK_TOL)?;
    println!("martinet equiregular on the sample: {:?}", cert.offending.is_none());

    let engel = harness::system("engel")?;
    let frame = adapted_frame_at(&engel, &[0.0; 4], DEFAULT_RANK_TOL)?;
    for e in &frame.entries {
        println!("  engel frame weight {}: {}", e.weight, e.field);
    }

    let h = harness::system("heisenberg")?;
    for name in ["x-axis", "vertical", "cusp"] {
        let c = harness::curve(name, &h)?;
        let sweep = tangency_sweep(&h, c.path.as_ref(), 21, DEFAULT_RANK_TOL)?;
        println!("heisenberg {name}: maximal tangency degree {}", sweep.kappa);
    }
    Ok(())
}
