//! Built-in benchmark systems.

use crate::error::Result;
use crate::expr::{ScalarExpr, Variables};
use crate::field::{parse_field, ControlAffineSystem, VectorField};

fn field(src: &str, n: usize) -> VectorField {
    parse_field(src, n).expect("builtin field parses")
}

/// `f1 = ∂x`, `f2 = ∂y + x ∂z`.
pub fn heisenberg() -> ControlAffineSystem {
    ControlAffineSystem::new("heisenberg", None, vec![field("1, 0, 0", 3), field("0, 1, x1", 3)])
        .expect("valid")
}

/// Heisenberg with drift `∂z`.
pub fn heisenberg_drift() -> ControlAffineSystem {
    let mut s = heisenberg().with_drift(field("0, 0, 1", 3)).expect("valid");
    s.label = "heisenberg_drift".into();
    s
}

/// Heisenberg with drift `x ∂z`, which vanishes on `{x = 0}`.
pub fn heisenberg_vanishing_drift() -> ControlAffineSystem {
    let mut s = heisenberg().with_drift(field("0, 0, x1", 3)).expect("valid");
    s.label = "heisenberg_vanishing_drift".into();
    s
}

/// `f1 = ∂x`, `f2 = ∂y + x ∂z + x² ∂w`.
pub fn engel() -> ControlAffineSystem {
    ControlAffineSystem::new(
        "engel",
        None,
        vec![field("1, 0, 0, 0", 4), field("0, 1, x1, x1^2", 4)],
    )
    .expect("valid")
}

/// `f1 = ∂x`, `f2 = ∂y + x² ∂z`; not equiregular across `{x = 0}`.
pub fn martinet() -> ControlAffineSystem {
    ControlAffineSystem::new("martinet", None, vec![field("1, 0, 0", 3), field("0, 1, x1^2", 3)])
        .expect("valid")
}

/// Drift `(1, 0)` with controls along `(1, 0)` and `(φ1, φ2)`.
pub fn riemann2d(phi1: &ScalarExpr, phi2: &ScalarExpr) -> Result<ControlAffineSystem> {
    let f0 = field("1, 0", 2);
    let f = VectorField::new(vec![phi1.clone(), phi2.clone()])?;
    ControlAffineSystem::new("riemann2d", Some(f0.clone()), vec![f0, f])
}

/// The default pair `φ1 = x1`, `φ2 = 1`.
pub fn riemann2d_default() -> ControlAffineSystem {
    let (p1, p2) = riemann2d_default_phi();
    riemann2d(&p1, &p2).expect("valid")
}

pub fn riemann2d_default_phi() -> (ScalarExpr, ScalarExpr) {
    let parts = crate::expr::parse_components("x1, 1", &Variables::Indexed(2)).expect("parses");
    (parts[0].clone(), parts[1].clone())
}
