//! Brackets of parsed fields, the Jacobi identity and the flow commutator.

use nonholo::ode::commutator_consistency;
use nonholo::{lie_bracket, parse_field};

fn main() -> nonholo::Result<()> {
    let f = parse_field("1, 0, -x2/2", 3)?;
    let g = parse_field("0, 1, x1/2", 3)?;
    let fg = lie_bracket(&f, &g)?;
    println!("[f, g] = {fg}");

    let h = parse_field("sin(x3), x1*x2, 1", 3)?;
    let jacobi = lie_bracket(&f, &lie_bracket(&g, &h)?)?
        .add(&lie_bracket(&g, &lie_bracket(&h, &f)?)?)?
        .add(&lie_bracket(&h, &lie_bracket(&f, &g)?)?)?;
    println!("Jacobi sum at (0.3, -0.2, 0.7): {:?}", jacobi.eval(&[0.3, -0.2, 0.7]));

    // e^{-tg} e^{-tf} e^{tg} e^{tf} q ≈ q + t²[f,g](q)
    let steps = [0.2, 0.1, 0.05, 0.025];
    let exact = commutator_consistency(&f, &g, &[0.1, 0.2, 0.0], &steps)?;
    println!("heisenberg pair: remainder order {}", exact.order);
    let g2 = parse_field("0, 1, sin(x1)", 3)?;
    let curved = commutator_consistency(&f, &g2, &[0.1, 0.2, 0.0], &steps)?;
    for (t, e) in &curved.errors {
        println!("  t = {t:<7} error/t² = {e:.3e}");
    }
    println!("curved pair: remainder order {:.3}", curved.order);
    Ok(())
}
