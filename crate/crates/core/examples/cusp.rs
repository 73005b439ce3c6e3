//! Cusp screening along curves of the drifted Heisenberg system.

use nonholo::complexity::cusp_condition;
use nonholo::harness;
use nonholo::path::uniform_grid;

fn main() -> nonholo::Result<()> {
    let sys = harness::system("heisenberg_drift")?;
    for name in ["cusp", "x-axis", "drift-orbit"] {
        let c = harness::curve(name, &sys)?;
        let r = cusp_condition(&sys, &c, &uniform_grid(c.domain(), 41))?;
        println!("{name:<12} suspects {:?} certificate {:?}", r.suspects(), r.certificate);
    }
    Ok(())
}
