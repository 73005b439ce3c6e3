use nonholo::path::SymbolicPath;
use nonholo::structure::*;
use nonholo::systems::{engel, heisenberg, heisenberg_drift, martinet};
use nonholo::{parse_field, ControlAffineSystem, Error, VectorField};
use proptest::prelude::*;

const TOL: f64 = DEFAULT_RANK_TOL;

fn words(c: &[(BracketWord, VectorField)]) -> Vec<Vec<usize>> {
    c.iter().map(|(w, _)| w.0.clone()).collect()
}

#[test]
fn heisenberg_closure_of_length_two() {
    let c = bracket_closure(&heisenberg(), 2).unwrap();
    assert_eq!(words(&c), vec![vec![1], vec![2], vec![1, 2], vec![2, 1]]);
    assert_eq!(c[2].1.eval(&[0.4, 0.1, 0.2]), vec![0.0, 0.0, 1.0]);
    assert_eq!(c[3].1.eval(&[0.4, 0.1, 0.2]), vec![0.0, 0.0, -1.0]);
}

#[test]
fn engel_closure_contains_second_bracket() {
    let c = bracket_closure(&engel(), 3).unwrap();
    let (_, f) = c.iter().find(|(w, _)| w.0 == vec![1, 1, 2]).unwrap();
    assert_eq!(f.eval(&[0.7, 0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0, 2.0]);
}

#[test]
fn flags_at_origin() {
    let h = flag_at(&heisenberg(), &[0.0; 3], TOL).unwrap();
    assert_eq!((h.dims.clone(), h.weights.clone(), h.step), (vec![2, 3], vec![1, 1, 2], 2));
    assert_eq!(h.growth_vector(), "(2,3)");
    let e = flag_at(&engel(), &[0.0; 4], TOL).unwrap();
    assert_eq!((e.dims, e.weights), (vec![2, 3, 4], vec![1, 1, 2, 3]));
}

#[test]
fn line_field_fails_hormander() {
    let sys = ControlAffineSystem::new("line", None, vec![parse_field("1, 0", 2).unwrap()]).unwrap();
    assert!(matches!(flag_at(&sys, &[0.0, 0.0], TOL), Err(Error::Hormander { .. })));
}

#[test]
fn heisenberg_is_equiregular() {
    let sample = quasi_random_sample(&[(-2.0, 2.0); 3], 50);
    let cert = equiregular_check(&heisenberg(), &sample, TOL).unwrap();
    assert!(cert.passed);
    assert_eq!(cert.dims, vec![2, 3]);
}

#[test]
fn martinet_fails_on_its_singular_plane() {
    let mut sample = quasi_random_sample(&[(0.1, 1.0), (-1.0, 1.0), (-1.0, 1.0)], 8);
    sample.push(vec![0.0, 0.3, -0.2]);
    let cert = equiregular_check(&martinet(), &sample, TOL).unwrap();
    assert!(!cert.passed);
    let (q, dims) = cert.offending.unwrap();
    assert_eq!(q[0], 0.0);
    assert_eq!(dims, vec![2, 2, 3]);
    assert!(matches!(equiregular_check(&martinet(), &[], TOL), Err(Error::Precondition(_))));
}

#[test]
fn adapted_frames() {
    let f = adapted_frame_at(&heisenberg(), &[0.0; 3], TOL).unwrap();
    let labels: Vec<String> = f.entries.iter().map(|e| e.label.to_string()).collect();
    assert_eq!(labels, vec!["f1", "f2", "[f1,f2]"]);
    assert_eq!(f.weights(), vec![1, 1, 2]);
    let e = adapted_frame_at(&engel(), &[0.0; 4], TOL).unwrap();
    let labels: Vec<String> = e.entries.iter().map(|e| e.label.to_string()).collect();
    assert_eq!(labels, vec!["f1", "f2", "[f1,f2]", "[f1,[f1,f2]]"]);
}

#[test]
fn oversized_rank_tolerance_cannot_complete_frame() {
    // at x = 2 the frame (f1, f2, ∂z) has singular value ratio ≈ 0.17
    assert!(matches!(
        adapted_frame_at(&heisenberg(), &[2.0, 0.0, 0.0], 0.5),
        Err(Error::FrameIncomplete { .. }) | Err(Error::Hormander { .. })
    ));
    // a threshold above one rejects even an orthonormal frame
    assert!(adapted_frame_at(&heisenberg(), &[0.0; 3], 1.5).is_err());
}

#[test]
fn drift_orders() {
    assert_eq!(drift_order(&heisenberg_drift(), &[0.0; 3], TOL).unwrap(), 2);
    let sample = quasi_random_sample(&[(-1.0, 1.0); 3], 20);
    let rep = verify_drift_order(&heisenberg_drift(), &sample, TOL).unwrap();
    assert!(rep.constant && rep.order == 2);
}

#[test]
fn tangency_degrees() {
    let h = heisenberg();
    let x_axis = SymbolicPath::parse("t, 0, 0", 3, (0.0, 1.0)).unwrap();
    let vertical = SymbolicPath::parse("0, 0, t", 3, (0.0, 1.0)).unwrap();
    let cusp = SymbolicPath::parse("t^2, 0, t", 3, (-0.5, 0.5)).unwrap();
    assert_eq!(tangency_degree(&h, &x_axis, 0.3, TOL).unwrap(), 1);
    assert_eq!(tangency_degree(&h, &vertical, 0.3, TOL).unwrap(), 2);
    assert_eq!(tangency_degree(&h, &cusp, 0.0, TOL).unwrap(), 2);
    assert_eq!(tangency_sweep(&h, &vertical, 128, TOL).unwrap().kappa, 2);
    assert_eq!(tangency_sweep(&h, &x_axis, 128, TOL).unwrap().kappa, 1);
}

fn mixed_heisenberg(a: [f64; 4]) -> ControlAffineSystem {
    let h = heisenberg();
    let f = h.controlled();
    let g1 = VectorField::combination(&[a[0], a[1]], f).unwrap();
    let g2 = VectorField::combination(&[a[2], a[3]], f).unwrap();
    ControlAffineSystem::new("mixed", None, vec![g1, g2]).unwrap()
}

proptest! {
    #[test]
    fn weights_reconstruct_dims(q in prop::array::uniform4(-2.0f64..2.0)) {
        let flag = flag_at(&engel(), &q, TOL).unwrap();
        prop_assert!(flag.dims.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*flag.dims.last().unwrap(), 4);
        for (s, &d) in flag.dims.iter().enumerate() {
            prop_assert_eq!(flag.weights.iter().filter(|&&w| w <= s + 1).count(), d);
        }
    }

    #[test]
    fn frames_are_independent(q in prop::array::uniform4(-2.0f64..2.0)) {
        let f = adapted_frame_at(&engel(), &q, TOL).unwrap();
        prop_assert!(f.conditioning_at(&q) >= TOL);
        for e in &f.entries {
            if let FrameLabel::Word(w) = &e.label {
                prop_assert!(w.len() <= e.weight);
            }
        }
    }

    #[test]
    fn drift_order_ignores_scaling(c in prop_oneof![-5.0f64..-0.01, 0.01f64..5.0], q in prop::array::uniform3(-1.0f64..1.0)) {
        let sys = heisenberg_drift();
        let scaled = sys.with_drift(sys.drift().unwrap().scale(c)).unwrap();
        prop_assert_eq!(drift_order(&scaled, &q, TOL).unwrap(), drift_order(&sys, &q, TOL).unwrap());
    }

    #[test]
    fn flag_ignores_generator_mixing(a in prop::array::uniform4(-2.0f64..2.0), q in prop::array::uniform3(-1.0f64..1.0)) {
        prop_assume!((a[0] * a[3] - a[1] * a[2]).abs() > 0.1);
        let flag = flag_at(&mixed_heisenberg(a), &q, TOL).unwrap();
        prop_assert_eq!(flag.dims, vec![2, 3]);
    }
}
