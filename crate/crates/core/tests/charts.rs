use nonholo::charts::*;
use nonholo::path::{uniform_grid, FlowPath, SymbolicPath};
use nonholo::structure::DEFAULT_RANK_TOL as TOL;
use nonholo::systems::{engel, heisenberg, heisenberg_drift};
use nonholo::{flow, parse_field, ControlAffineSystem, Tolerance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn single_leg_coordinates() {
    let h = heisenberg();
    let chart = build_chart(&h, &[0.0; 3], None, TOL).unwrap();
    for a in [0.3, -0.8] {
        let p = flow(&h.controlled()[0], &[0.0; 3], a, Tolerance::default()).unwrap();
        assert!(dist(&chart.to_coords(&p).unwrap(), &[a, 0.0, 0.0]) < 1e-12);
    }
    assert_eq!(chart.from_coords(&[0.0; 3]).unwrap(), vec![0.0; 3]);
    assert_eq!(chart.to_coords(&[0.0; 3]).unwrap(), vec![0.0; 3]);
}

#[test]
fn heisenberg_orderings() {
    let h = heisenberg();
    let (a, b) = (0.4, -0.7);
    let p = [a, b, a * b];
    let default = build_chart(&h, &[0.0; 3], None, TOL).unwrap();
    let z = default.to_coords(&p).unwrap();
    assert!(dist(&z, &[a, b, 0.0]) < 1e-8);
    assert!(dist(&default.from_coords(&z).unwrap(), &p) < 1e-8);
    let swapped = build_chart(&h, &[0.0; 3], Some(&[1, 0, 2]), TOL).unwrap();
    let z = swapped.to_coords(&p).unwrap();
    assert!(dist(&z, &[a, b, a * b]) < 1e-8);
    assert!(dist(&swapped.from_coords(&z).unwrap(), &p) < 1e-8);
    assert!(build_chart(&h, &[0.0; 3], Some(&[0, 0, 2]), TOL).is_err());
}

#[test]
fn drift_chart_rectifies_the_drift() {
    let sys = heisenberg_drift();
    let chart = build_drift_chart(&sys, &[0.0; 3], TOL).unwrap();
    let l = chart.drift_slot.unwrap();
    assert_eq!(chart.weights[l], 2);
    let mut z = vec![0.0; 3];
    z[l] = 0.15;
    assert!(dist(&chart.from_coords(&z).unwrap(), &[0.0, 0.0, 0.15]) < 1e-12);
    z[l] = 0.0;
    assert_eq!(chart.from_coords(&z).unwrap(), vec![0.0; 3]);
}

fn curved_drift() -> ControlAffineSystem {
    heisenberg()
        .with_drift(parse_field("0.2*x2, 0, 1 + x1^2", 3).unwrap())
        .unwrap()
}

#[test]
fn drift_pushforward_is_the_axis() {
    let sys = curved_drift();
    let q = [0.1, 0.2, 0.0];
    let chart = build_drift_chart(&sys, &q, TOL).unwrap();
    let l = chart.drift_slot.unwrap();
    let f0 = sys.drift().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-5;
    for _ in 0..20 {
        let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let mut up = z.clone();
        let mut dn = z.clone();
        up[l] += h;
        dn[l] -= h;
        let (pu, pd) = (chart.from_coords(&up).unwrap(), chart.from_coords(&dn).unwrap());
        let fd: Vec<f64> = pu.iter().zip(&pd).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let at = f0.eval(&chart.from_coords(&z).unwrap());
        assert!(dist(&fd, &at) <= 1e-6);
    }
    for k in -4..=4 {
        let t = 0.05 * k as f64;
        let p = flow(f0, &q, t, Tolerance::default()).unwrap();
        let z = chart.to_coords(&p).unwrap();
        let mut expect = vec![0.0; 3];
        expect[l] = t;
        assert!(dist(&z, &expect) <= 1e-6);
    }
}

#[test]
fn families_along_paths() {
    let h = heisenberg();
    let x_axis = SymbolicPath::parse("t, 0, 0", 3, (0.0, 1.0)).unwrap();
    let grid = uniform_grid((0.0, 1.0), 16);
    let charts = continuous_family(&h, &x_axis, &grid, false, TOL).unwrap();
    assert_eq!(charts.len(), 16);
    for (c, &t) in charts.iter().zip(&grid) {
        assert_eq!(c.base(), &[t, 0.0, 0.0]);
    }
    // |z_j^t(γ(t+ξ))| ≤ C ξ
    let path = SymbolicPath::parse("t, t^2, sin(t)", 3, (0.0, 1.0)).unwrap();
    let charts = continuous_family(&h, &path, &grid, false, TOL).unwrap();
    for (c, &t) in charts.iter().zip(&grid) {
        for xi in [0.1, 0.05, 0.025] {
            let z = c.to_coords(&path_pos(&path, t + xi)).unwrap();
            assert!(z.iter().all(|v| v.abs() <= 3.0 * xi), "{z:?}");
        }
    }
}

fn path_pos(p: &SymbolicPath, t: f64) -> Vec<f64> {
    use nonholo::path::Path;
    p.position(t)
}

#[test]
fn weight_graded_estimate_on_a_tangent_path() {
    // γ' = ∂z = [f1, f2] on {x = 0}: degree 2, and the weight-3 coordinate
    // must vanish like ξ^{3/2}
    let e = engel();
    let path = SymbolicPath::parse("0, 0, t, 0", 4, (0.0, 1.0)).unwrap();
    let grid = uniform_grid((0.0, 0.5), 6);
    let charts = continuous_family(&e, &path, &grid, false, TOL).unwrap();
    for (c, &t) in charts.iter().zip(&grid) {
        for xi in [0.1, 0.01, 0.001] {
            let z = c.to_coords(&path_pos(&path, t + xi)).unwrap();
            assert!(z[3].abs() <= 2.0 * xi.powf(1.5) + 1e-12, "{z:?}");
            assert!(z[2].abs() <= 2.0 * xi);
        }
    }
}

#[test]
fn rectifying_families() {
    let h = heisenberg();
    let x_axis = SymbolicPath::parse("t, 0, 0", 3, (0.0, 1.0)).unwrap();
    let fam = rectifying_family(&h, &x_axis, &uniform_grid((0.0, 1.0), 11), TOL).unwrap();
    assert_eq!(fam.charts[0].weights[fam.alpha], 1);
    assert!(fam.translation_residual < 1e-10 && fam.transverse_residual < 1e-10);

    let sys = heisenberg_drift();
    let orbit = FlowPath {
        field: sys.drift().unwrap().clone(),
        start: vec![0.1, 0.2, 0.0],
        horizon: 0.5,
    };
    let fam = rectifying_family(&sys, &orbit, &uniform_grid((0.0, 0.5), 6), TOL).unwrap();
    assert_eq!(Some(fam.alpha), fam.charts[0].drift_slot);
    assert!(fam.translation_residual < 1e-10 && fam.transverse_residual < 1e-10);

    let single = rectifying_family(&h, &x_axis, &[0.3], TOL).unwrap();
    assert_eq!(single.charts.len(), 1);
    assert_eq!(single.translation_residual, 0.0);
}

#[test]
fn rectifying_rejects_varying_degree() {
    let h = heisenberg();
    let bent = SymbolicPath::parse("t, 0, t^2", 3, (-0.5, 0.5)).unwrap();
    // γ' = (1, 0, 2t) lies in Δ^1 only where 2t = x = t, i.e. t = 0
    assert!(rectifying_family(&h, &bent, &uniform_grid((-0.5, 0.5), 5), TOL).is_err());
}

#[test]
fn xi_inside_pi_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let eta = rng.gen_range(0.0..0.2);
        let t = rng.gen_range(0.0..0.2);
        let spec = DriftBoxSpec {
            eta,
            horizon: t,
            weights: vec![1, 1, 2],
            slot: 2,
            order: 2,
        };
        let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.25..0.25)).collect();
        if xi_contains(&spec, &z) {
            assert!(pi_contains(&spec, &z), "{z:?} {spec:?}");
        }
    }
}

proptest! {
    #[test]
    fn heisenberg_round_trip(z in prop::array::uniform3(-0.3f64..0.3)) {
        let z = [z[0], z[1], z[2] * 0.3];
        let chart = build_chart(&heisenberg(), &[0.2, -0.1, 0.4], None, TOL).unwrap();
        let p = chart.from_coords(&z).unwrap();
        prop_assert!(dist(&chart.to_coords(&p).unwrap(), &z) <= 1e-8);
    }

    #[test]
    fn nonlinear_round_trip(z in prop::array::uniform3(-0.3f64..0.3)) {
        let z = [z[0], z[1], z[2] * 0.3];
        let sys = ControlAffineSystem::new(
            "bent",
            None,
            vec![parse_field("1, 0, sin(x2)", 3).unwrap(), parse_field("0, 1 + x1^2, exp(x1)", 3).unwrap()],
        ).unwrap();
        let chart = build_chart(&sys, &[0.1, 0.2, 0.0], None, TOL).unwrap();
        let p = chart.from_coords(&z).unwrap();
        prop_assert!(dist(&chart.to_coords(&p).unwrap(), &z) <= 1e-8);
    }

    #[test]
    fn box_is_monotone(eta in 0.0f64..0.5, grow in 0.0f64..0.5, z in prop::array::uniform3(-0.3f64..0.3)) {
        let small = BoxSpec { eta, weights: vec![1, 1, 2] };
        let big = BoxSpec { eta: eta + grow, weights: vec![1, 1, 2] };
        prop_assert!(!box_contains(&small, &z) || box_contains(&big, &z));
    }

    #[test]
    fn pseudo_norm_is_homogeneous(lambda in 0.01f64..3.0, z in prop::array::uniform4(-1.0f64..1.0)) {
        let w = [1, 1, 2, 3];
        let lhs = pseudo_norm(&w, &dilate(&w, lambda, &z));
        prop_assert!((lhs - lambda * pseudo_norm(&w, &z)).abs() <= 1e-12 * (1.0 + lhs));
    }
}
