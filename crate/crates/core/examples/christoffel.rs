//! Christoffel symbols of the two-dimensional Riemannian example.

use nonholo::harness::{christoffel_check, parse_phi};

fn main() -> nonholo::Result<()> {
    for (a, b) in [("x1", "1"), ("sin(x1)", "1 + x1^2"), ("2", "1 + x2")] {
        let (p1, p2) = parse_phi(a, b)?;
        let r = christoffel_check(&p1, &p2)?;
        println!(
            "phi = ({a}, {b}): G1_11 {} G2_11 {} difference quotient {:.9} metric {:.6?} geodesic drift line {}",
            r.gamma1_11, r.gamma2_11, r.finite_difference, r.metric_gammas, !r.not_geodesic
        );
    }
    Ok(())
}
